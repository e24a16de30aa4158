#include "flowrbm/dataset.hpp"

#include "flowrbm/error.hpp"

namespace flowrbm {

void BinaryDataset::validate() const {
  if (rows.rows() < 1 || rows.cols() < 1) throw ContractViolation("dataset must contain at least one example");
  const bool binary = ((rows.array() == 0.0) || (rows.array() == 1.0)).all();
  if (!binary) throw ContractViolation("dataset entries must be exactly 0 or 1");
}

BinaryDataset BinaryDataset::subset(const std::vector<Eigen::Index>& indices) const {
  BinaryDataset out{Eigen::MatrixXd(static_cast<Eigen::Index>(indices.size()), rows.cols()), source,
                    binarize_threshold};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= rows.rows()) throw ContractViolation("subset index out of range");
    out.rows.row(static_cast<Eigen::Index>(r)) = rows.row(indices[r]);
  }
  return out;
}

BinaryDataset BinaryDataset::head(Eigen::Index n) const {
  if (n < 0 || n > rows.rows()) throw ContractViolation("head: not enough rows");
  return {rows.topRows(n), source, binarize_threshold};
}

BinaryDataset BinaryDataset::tail(Eigen::Index n) const {
  if (n < 0 || n > rows.rows()) throw ContractViolation("tail: not enough rows");
  return {rows.bottomRows(n), source, binarize_threshold};
}

std::uint64_t state_index(const Eigen::Ref<const Eigen::VectorXd>& bits) {
  if (bits.size() > 63) throw CapacityError("state_index supports at most 63 units");
  std::uint64_t index = 0;
  for (Eigen::Index i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0.0) index |= std::uint64_t{1} << i;
  }
  return index;
}

Eigen::VectorXd state_bits(std::uint64_t index, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = static_cast<double>((index >> i) & 1U);
  return v;
}

Eigen::MatrixXd all_states(int dim) {
  if (dim < 0 || dim > 24) throw CapacityError("all_states: dimension must be in [0, 24]");
  const Eigen::Index n = Eigen::Index{1} << dim;
  Eigen::MatrixXd states(n, dim);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int i = 0; i < dim; ++i) states(s, i) = static_cast<double>((s >> i) & 1);
  }
  return states;
}

}  // namespace flowrbm
