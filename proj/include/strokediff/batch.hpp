#pragma once

#include <vector>

#include "strokediff/sketch.hpp"

namespace strokediff {

// Zero-padded velocity sequences. velocities[b] is (max_length, 3); rows at
// or past lengths[b] are padding and have mask 0.
struct SketchBatch {
  std::vector<Matrix> velocities;
  Matrix mask;  // (batch, max_length), entries 0 or 1
  std::vector<int> lengths;

  int batch_size() const { return static_cast<int>(lengths.size()); }
  int max_length() const { return static_cast<int>(mask.cols()); }
};

SketchBatch make_batch(const std::vector<VelocitySequence>& sequences);
SketchBatch make_batch(const std::vector<Matrix>& sequences);

struct ChannelStats {
  RowVector mean;  // (3)
  RowVector std;   // (3), population standard deviation
};

// Statistics over masked-in elements only.
ChannelStats masked_channel_stats(const SketchBatch& batch);

}  // namespace strokediff
