#pragma once

#include <algorithm>
#include <numeric>

#include "prunekit/model.hpp"

namespace prunekit {

// Per-block keep/drop decision derived from averaged row L2 norms.
struct PrunePlan {
  size_t block_index = 0;
  double k = 0.0;                  // prune fraction applied this round
  std::vector<size_t> keep_rows;   // strictly increasing indices into current rows
  std::vector<uint8_t> mask;       // mask[i] == 1 iff row i is kept
  std::vector<double> norms;       // averaged row norms the decision used

  size_t width() const { return mask.size(); }
  size_t n_dropped() const { return width() - keep_rows.size(); }

  void validate() const {
    size_t kept = 0;
    size_t prev = 0;
    bool first = true;
    for (size_t r : keep_rows) {
      if (r >= width() || (!first && r <= prev))
        throw ContractError("PrunePlan: keep_rows not strictly increasing in range");
      prev = r;
      first = false;
      ++kept;
    }
    size_t mask_kept = 0;
    for (uint8_t m : mask) mask_kept += m ? 1 : 0;
    if (mask_kept != kept) throw ContractError("PrunePlan: mask and keep_rows disagree");
    if (norms.size() != mask.size()) throw ContractError("PrunePlan: norms size mismatch");
  }
};

/// Row L2 norms of a 2-D tensor: out[i] = sqrt(sum_j w[i,j]^2).
inline std::vector<double> row_l2_norms(const Tensor& w) {
  const size_t r = w.rows(), c = w.cols();
  std::vector<double> out(r);
  for (size_t i = 0; i < r; ++i) {
    const double* row = w.data() + i * c;
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) s += row[j] * row[j];
    out[i] = std::sqrt(s);
  }
  return out;
}

/// Per-row mean of the gate and up norms of a block.
inline std::vector<double> averaged_norms(const MlpBlock& block) {
  block.check_coupling();
  std::vector<double> g = row_l2_norms(block.w_gate);
  const std::vector<double> u = row_l2_norms(block.w_up);
  for (size_t i = 0; i < g.size(); ++i) g[i] = 0.5 * (g[i] + u[i]);
  return g;
}

namespace detail {

// Exact rank selection: drop the n_drop smallest averaged norms. Among equal
// norms the higher row index is dropped first, so lower indices survive.
inline PrunePlan make_plan(const MlpBlock& block, size_t n_drop, double k,
                           size_t block_index) {
  const size_t d = block.width();
  if (n_drop >= d)
    throw ParameterError(strf("prune: dropping %zu of %zu rows would empty the block",
                              n_drop, d));
  PrunePlan plan;
  plan.block_index = block_index;
  plan.k = k;
  plan.norms = averaged_norms(block);
  std::vector<size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (plan.norms[a] != plan.norms[b]) return plan.norms[a] < plan.norms[b];
    return a > b;
  });
  plan.mask.assign(d, 1);
  for (size_t i = 0; i < n_drop; ++i) plan.mask[order[i]] = 0;
  plan.keep_rows.reserve(d - n_drop);
  for (size_t i = 0; i < d; ++i)
    if (plan.mask[i]) plan.keep_rows.push_back(i);
  return plan;
}

}  // namespace detail

/// Plan dropping floor(k * width) rows with the smallest averaged norms.
inline PrunePlan plan_prune(const MlpBlock& block, double k, size_t block_index = 0) {
  if (!(k >= 0.0) || k >= 1.0)
    throw ParameterError(strf("plan_prune: k must be in [0, 1), got %g", k));
  const auto n_drop =
      static_cast<size_t>(std::floor(k * static_cast<double>(block.width())));
  return detail::make_plan(block, n_drop, k, block_index);
}

/// Plan dropping an exact row count (used when inverting retention targets).
inline PrunePlan plan_prune_count(const MlpBlock& block, size_t n_drop,
                                  size_t block_index = 0) {
  const double k = static_cast<double>(n_drop) / static_cast<double>(block.width());
  return detail::make_plan(block, n_drop, k, block_index);
}

namespace detail {
inline void check_plan_applies(const MlpBlock& block, const PrunePlan& plan) {
  block.check_coupling();
  plan.validate();
  if (plan.width() != block.width())
    throw ContractError(strf("prune plan built for width %zu but block has width %zu",
                             plan.width(), block.width()));
}
}  // namespace detail

/// Hadamard-mask realization: dropped rows of gate/up and the matching
/// columns of down become zero; shapes are unchanged.
inline void apply_prune_masked(MlpBlock& block, const PrunePlan& plan) {
  detail::check_plan_applies(block, plan);
  const size_t d = block.width();
  const size_t dm = block.w_gate.cols();
  for (size_t i = 0; i < d; ++i) {
    if (plan.mask[i]) continue;
    std::fill_n(block.w_gate.data() + i * dm, dm, 0.0);
    std::fill_n(block.w_up.data() + i * dm, dm, 0.0);
    for (size_t r = 0; r < dm; ++r) block.w_down.data()[r * d + i] = 0.0;
  }
  block.w_gate.clear_grad();
  block.w_up.clear_grad();
  block.w_down.clear_grad();
}

/// Compacted realization: dropped rows/columns are physically removed, the
/// block width shrinks, and kept rows preserve their relative order.
inline void apply_prune_compact(MlpBlock& block, const PrunePlan& plan) {
  detail::check_plan_applies(block, plan);
  const size_t d = block.width();
  const size_t dm = block.w_gate.cols();
  const size_t kept = plan.keep_rows.size();

  std::vector<double> gate(kept * dm), up(kept * dm), down(dm * kept);
  for (size_t n = 0; n < kept; ++n) {
    const size_t src = plan.keep_rows[n];
    std::memcpy(gate.data() + n * dm, block.w_gate.data() + src * dm, dm * sizeof(double));
    std::memcpy(up.data() + n * dm, block.w_up.data() + src * dm, dm * sizeof(double));
  }
  for (size_t r = 0; r < dm; ++r) {
    const double* src_row = block.w_down.data() + r * d;
    double* dst_row = down.data() + r * kept;
    for (size_t n = 0; n < kept; ++n) dst_row[n] = src_row[plan.keep_rows[n]];
  }
  block.w_gate.reset_data({kept, dm}, std::move(gate));
  block.w_up.reset_data({kept, dm}, std::move(up));
  block.w_down.reset_data({dm, kept}, std::move(down));
  block.check_coupling();
}

struct Retention {
  double total = 1.0;  // parameter ratio after/before
  double mlp = 1.0;    // MLP neuron ratio after/before
};

inline Retention retention_from_counts(size_t params_before, size_t params_after,
                                       size_t neurons_before, size_t neurons_after) {
  if (params_before == 0 || neurons_before == 0)
    throw ParameterError("retention: zero baseline count");
  Retention r;
  r.total = static_cast<double>(params_after) / static_cast<double>(params_before);
  r.mlp = static_cast<double>(neurons_after) / static_cast<double>(neurons_before);
  return r;
}

inline Retention retention(const TransformerModel& before, const TransformerModel& after) {
  return retention_from_counts(before.parameter_count(), after.parameter_count(),
                               before.mlp_neuron_count(), after.mlp_neuron_count());
}

/// Analytic forward-pass FLOPs at a given sequence length: 2*m*n*L per linear
/// map, 2*L^2*d_model*2 per layer for attention scores/values, and
/// 2*L*d_model*vocab for the output head.
inline uint64_t flops_estimate(const TransformerModel& m, size_t seq_len) {
  if (seq_len < 1) throw ParameterError("flops_estimate: seq_len must be >= 1");
  const auto& cfg = m.config();
  const uint64_t l = seq_len;
  const uint64_t d = cfg.d_model;
  uint64_t total = 0;
  for (size_t i = 0; i < m.num_layers(); ++i) {
    total += 4 * 2 * d * d * l;            // wq, wk, wv, wo
    total += 2 * l * l * d * 2;            // attention scores + weighted values
    const uint64_t d_ff_b = m.mlp_block(i).width();
    total += 3 * 2 * d_ff_b * d * l;       // gate, up, down
  }
  total += 2 * l * d * static_cast<uint64_t>(cfg.vocab_size);  // head
  return total;
}

/// Text audit record of one pruning decision, for reproducibility review.
inline std::string prune_audit_text(const PrunePlan& plan) {
  std::string out = strf("block %zu k %.6f width %zu dropped %zu\n", plan.block_index,
                         plan.k, plan.width(), plan.n_dropped());
  out += "dropped_rows:";
  for (size_t i = 0; i < plan.width(); ++i)
    if (!plan.mask[i]) out += strf(" %zu", i);
  out += "\nnorms:";
  for (double n : plan.norms) out += strf(" %.9g", n);
  out += "\n";
  return out;
}

}  // namespace prunekit
