#include "boxgnn/model.hpp"

namespace boxgnn {

ModelParams ModelParams::zeros(const NodeCounts& counts, Eigen::Index dim, std::size_t layers) {
  ModelParams p;
  const auto nu = static_cast<Eigen::Index>(counts.users);
  const auto ni = static_cast<Eigen::Index>(counts.items);
  const auto nt = static_cast<Eigen::Index>(counts.tags);
  p.user_center = RowMatrix::Zero(nu, dim);
  p.user_offset = RowMatrix::Zero(nu, dim);
  p.item_center = RowMatrix::Zero(ni, dim);
  p.item_offset = RowMatrix::Zero(ni, dim);
  p.tag_center = RowMatrix::Zero(nt, dim);
  p.tag_offset = RowMatrix::Zero(nt, dim);
  p.attention.assign(layers, AttentionParams::zeros(dim));
  return p;
}

std::vector<RowMatrix*> ModelParams::tables() {
  std::vector<RowMatrix*> out{&user_center, &user_offset, &item_center, &item_offset, &tag_center, &tag_offset};
  for (auto& a : attention) out.push_back(&a.weight);
  return out;
}

std::vector<const RowMatrix*> ModelParams::tables() const {
  std::vector<const RowMatrix*> out{&user_center, &user_offset, &item_center, &item_offset, &tag_center, &tag_offset};
  for (const auto& a : attention) out.push_back(&a.weight);
  return out;
}

std::vector<Vector*> ModelParams::vectors() {
  std::vector<Vector*> out;
  for (auto& a : attention) out.push_back(&a.bias);
  return out;
}

std::vector<const Vector*> ModelParams::vectors() const {
  std::vector<const Vector*> out;
  for (const auto& a : attention) out.push_back(&a.bias);
  return out;
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto* t : tables()) n += static_cast<std::size_t>(t->size());
  for (const auto* v : vectors()) n += static_cast<std::size_t>(v->size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto* t : tables()) {
    if (!t->allFinite()) return false;
  }
  for (const auto* v : vectors()) {
    if (!v->allFinite()) return false;
  }
  return true;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const auto* t : tables()) s += t->squaredNorm();
  for (const auto* v : vectors()) s += v->squaredNorm();
  return s;
}

bool ModelParams::operator==(const ModelParams& other) const {
  const auto a = tables();
  const auto b = other.tables();
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k]->rows() != b[k]->rows() || a[k]->cols() != b[k]->cols() || *a[k] != *b[k]) return false;
  }
  const auto va = vectors();
  const auto vb = other.vectors();
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (*va[k] != *vb[k]) return false;
  }
  return true;
}

}  // namespace boxgnn
