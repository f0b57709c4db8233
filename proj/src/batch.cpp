#include "strokediff/batch.hpp"

#include <algorithm>
#include <cmath>

#include "strokediff/errors.hpp"

namespace strokediff {

SketchBatch make_batch(const std::vector<Matrix>& sequences) {
  if (sequences.empty()) throw ContractError("cannot batch an empty list");
  Eigen::Index max_len = 0;
  for (const auto& s : sequences) {
    if (s.cols() != 3) throw ContractError("velocity sequences must have 3 channels");
    max_len = std::max(max_len, s.rows());
  }
  SketchBatch batch;
  batch.mask = Matrix::Zero(static_cast<Eigen::Index>(sequences.size()), max_len);
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    Matrix padded = Matrix::Zero(max_len, 3);
    padded.topRows(sequences[b].rows()) = sequences[b];
    batch.velocities.push_back(std::move(padded));
    batch.mask.row(b).head(sequences[b].rows()).setOnes();
    batch.lengths.push_back(static_cast<int>(sequences[b].rows()));
  }
  return batch;
}

SketchBatch make_batch(const std::vector<VelocitySequence>& sequences) {
  std::vector<Matrix> values;
  values.reserve(sequences.size());
  for (const auto& s : sequences) values.push_back(s.values);
  return make_batch(values);
}

ChannelStats masked_channel_stats(const SketchBatch& batch) {
  RowVector sum = RowVector::Zero(3);
  RowVector sum_sq = RowVector::Zero(3);
  double count = 0.0;
  for (int b = 0; b < batch.batch_size(); ++b) {
    for (int j = 0; j < batch.lengths[b]; ++j) {
      const auto row = batch.velocities[b].row(j);
      sum += row;
      sum_sq += row.cwiseProduct(row);
      count += 1.0;
    }
  }
  ChannelStats stats;
  stats.mean = sum / count;
  stats.std = (sum_sq / count - stats.mean.cwiseProduct(stats.mean)).cwiseMax(0.0).cwiseSqrt();
  return stats;
}

}  // namespace strokediff
