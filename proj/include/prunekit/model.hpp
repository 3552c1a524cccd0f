#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "prunekit/tensor.hpp"

namespace prunekit {

struct ModelConfig {
  size_t vocab_size = 96;
  size_t d_model = 64;
  size_t n_layers = 4;
  size_t n_heads = 4;
  size_t d_ff = 160;  // initial MLP width; per-block widths shrink under pruning
  size_t max_seq_len = 128;
  uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 ||
        max_seq_len < 1)
      throw ParameterError("ModelConfig: all dimensions must be >= 1");
    if (d_model % n_heads != 0)
      throw ParameterError(strf("ModelConfig: d_model %zu not divisible by n_heads %zu",
                                d_model, n_heads));
  }

  bool operator==(const ModelConfig&) const = default;
};

// Gated MLP block. w_gate and w_up always share a row count and w_down's
// column count equals it; one row+row+column triple is one prunable neuron.
struct MlpBlock {
  Tensor w_gate;  // [d_ff_b x d_model]
  Tensor w_up;    // [d_ff_b x d_model]
  Tensor w_down;  // [d_model x d_ff_b]

  size_t width() const { return w_gate.rows(); }

  void check_coupling() const {
    if (w_up.rows() != w_gate.rows() || w_down.cols() != w_gate.rows() ||
        w_up.cols() != w_gate.cols() || w_down.rows() != w_gate.cols())
      throw ContractError("MlpBlock: gate/up/down shape coupling violated");
  }

  // y = (SiLU(x W_g^T) . (x W_u^T)) W_d^T for a row-major sequence x.
  Tensor forward(Graph* g, const Tensor& x) const {
    Tensor gate = silu(g, matmul_nt(g, x, w_gate));
    Tensor up = matmul_nt(g, x, w_up);
    return matmul_nt(g, mul(g, gate, up), w_down);
  }
};

struct TransformerLayer {
  Tensor attn_norm_gain;  // [d_model]
  Tensor wq, wk, wv, wo;  // [d_model x d_model] each
  Tensor mlp_norm_gain;   // [d_model]
  MlpBlock mlp;
};

// Decoder-only transformer: byte embedding + learned positions, pre-norm
// causal self-attention, gated MLP blocks, RMS-normalized head.
class TransformerModel {
 public:
  TransformerModel() = default;

  explicit TransformerModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    tok_embed_ = Tensor::randn({cfg.vocab_size, cfg.d_model}, std, rng, true);
    pos_embed_ = Tensor::randn({cfg.max_seq_len, cfg.d_model}, std, rng, true);
    layers_.resize(cfg.n_layers);
    for (auto& l : layers_) {
      l.attn_norm_gain = Tensor::full({cfg.d_model}, 1.0, true);
      l.wq = Tensor::randn({cfg.d_model, cfg.d_model}, std, rng, true);
      l.wk = Tensor::randn({cfg.d_model, cfg.d_model}, std, rng, true);
      l.wv = Tensor::randn({cfg.d_model, cfg.d_model}, std, rng, true);
      l.wo = Tensor::randn({cfg.d_model, cfg.d_model}, std, rng, true);
      l.mlp_norm_gain = Tensor::full({cfg.d_model}, 1.0, true);
      l.mlp.w_gate = Tensor::randn({cfg.d_ff, cfg.d_model}, std, rng, true);
      l.mlp.w_up = Tensor::randn({cfg.d_ff, cfg.d_model}, std, rng, true);
      l.mlp.w_down = Tensor::randn({cfg.d_model, cfg.d_ff}, std, rng, true);
    }
    final_norm_gain_ = Tensor::full({cfg.d_model}, 1.0, true);
    w_out_ = Tensor::randn({cfg.vocab_size, cfg.d_model}, std, rng, true);
  }

  const ModelConfig& config() const { return cfg_; }
  size_t num_layers() const { return layers_.size(); }
  MlpBlock& mlp_block(size_t i) { return layers_.at(i).mlp; }
  const MlpBlock& mlp_block(size_t i) const { return layers_.at(i).mlp; }

  /// Full-sequence logits [len x vocab]. Causal: position i depends only on
  /// tokens at positions <= i.
  Tensor forward(Graph* g, const std::vector<int>& tokens) const {
    if (tokens.empty()) throw InputError("forward: empty token sequence");
    if (tokens.size() > cfg_.max_seq_len)
      throw InputError(strf("forward: sequence length %zu exceeds max %zu", tokens.size(),
                            cfg_.max_seq_len));
    const size_t len = tokens.size();
    const size_t heads = cfg_.n_heads;
    const size_t dh = cfg_.d_model / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor x = add(g, embedding(g, tok_embed_, tokens), take_rows(g, pos_embed_, len));
    for (const auto& l : layers_) {
      Tensor a = rms_norm(g, x, l.attn_norm_gain);
      Tensor q = matmul_nt(g, a, l.wq);
      Tensor k = matmul_nt(g, a, l.wk);
      Tensor v = matmul_nt(g, a, l.wv);
      std::vector<Tensor> head_out;
      head_out.reserve(heads);
      for (size_t h = 0; h < heads; ++h) {
        Tensor qh = col_slice(g, q, h * dh, (h + 1) * dh);
        Tensor kh = col_slice(g, k, h * dh, (h + 1) * dh);
        Tensor vh = col_slice(g, v, h * dh, (h + 1) * dh);
        Tensor p = causal_softmax(g, scale(g, matmul_nt(g, qh, kh), inv_sqrt_dh));
        head_out.push_back(matmul(g, p, vh));
      }
      Tensor attn = matmul_nt(g, concat_cols(g, head_out), l.wo);
      x = add(g, x, attn);
      Tensor b = rms_norm(g, x, l.mlp_norm_gain);
      x = add(g, x, l.mlp.forward(g, b));
    }
    x = rms_norm(g, x, final_norm_gain_);
    return matmul_nt(g, x, w_out_);
  }

  /// Final-position logits restricted to the answer-choice token ids, in the
  /// given choice order.
  Tensor answer_logits(Graph* g, const std::vector<int>& tokens,
                       const std::vector<int>& choice_ids) const {
    check_choice_ids(choice_ids);
    Tensor logits = forward(g, tokens);
    std::vector<size_t> cols(choice_ids.begin(), choice_ids.end());
    return select_row_cols(g, logits, tokens.size() - 1, cols);
  }

  /// Grad-free evaluation path for metrics and caching.
  std::vector<double> answer_logit_values(const std::vector<int>& tokens,
                                          const std::vector<int>& choice_ids) const {
    Tensor v = answer_logits(nullptr, tokens, choice_ids);
    return v.values();
  }

  /// Parameters in a fixed traversal order. Rebuilt per call so the list
  /// stays valid across pruning-induced shape changes.
  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_embed", tok_embed_);
    out.emplace_back("pos_embed", pos_embed_);
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const std::string p = strf("layers.%zu.", i);
      out.emplace_back(p + "attn_norm", l.attn_norm_gain);
      out.emplace_back(p + "wq", l.wq);
      out.emplace_back(p + "wk", l.wk);
      out.emplace_back(p + "wv", l.wv);
      out.emplace_back(p + "wo", l.wo);
      out.emplace_back(p + "mlp_norm", l.mlp_norm_gain);
      out.emplace_back(p + "mlp.w_gate", l.mlp.w_gate);
      out.emplace_back(p + "mlp.w_up", l.mlp.w_up);
      out.emplace_back(p + "mlp.w_down", l.mlp.w_down);
    }
    out.emplace_back("final_norm", final_norm_gain_);
    out.emplace_back("w_out", w_out_);
    return out;
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.size();
    return n;
  }

  /// Total surviving MLP neurons: sum of per-block widths.
  size_t mlp_neuron_count() const {
    size_t n = 0;
    for (const auto& l : layers_) n += l.mlp.width();
    return n;
  }

  TransformerModel clone() const {
    TransformerModel m;
    m.cfg_ = cfg_;
    m.tok_embed_ = tok_embed_.deep_copy();
    m.pos_embed_ = pos_embed_.deep_copy();
    m.final_norm_gain_ = final_norm_gain_.deep_copy();
    m.w_out_ = w_out_.deep_copy();
    m.layers_.reserve(layers_.size());
    for (const auto& l : layers_) {
      TransformerLayer c;
      c.attn_norm_gain = l.attn_norm_gain.deep_copy();
      c.wq = l.wq.deep_copy();
      c.wk = l.wk.deep_copy();
      c.wv = l.wv.deep_copy();
      c.wo = l.wo.deep_copy();
      c.mlp_norm_gain = l.mlp_norm_gain.deep_copy();
      c.mlp.w_gate = l.mlp.w_gate.deep_copy();
      c.mlp.w_up = l.mlp.w_up.deep_copy();
      c.mlp.w_down = l.mlp.w_down.deep_copy();
      m.layers_.push_back(std::move(c));
    }
    return m;
  }

  // -- serialization: little-endian binary, versioned header, named tensors --

  static constexpr char kMagic[9] = "PKMODEL1";
  static constexpr uint32_t kVersion = 1;

  void serialize(std::ostream& os) const {
    os.write(kMagic, 8);
    io::write_raw<uint32_t>(os, kVersion);
    io::write_raw<uint64_t>(os, cfg_.vocab_size);
    io::write_raw<uint64_t>(os, cfg_.d_model);
    io::write_raw<uint64_t>(os, cfg_.n_layers);
    io::write_raw<uint64_t>(os, cfg_.n_heads);
    io::write_raw<uint64_t>(os, cfg_.d_ff);
    io::write_raw<uint64_t>(os, cfg_.max_seq_len);
    io::write_raw<uint64_t>(os, cfg_.seed);
    const auto named = named_parameters();
    io::write_raw<uint32_t>(os, static_cast<uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
      io::write_string(os, name);
      io::write_raw<uint8_t>(os, 0);  // dtype 0 = f64
      io::write_raw<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
      for (size_t d : t.shape()) io::write_raw<uint64_t>(os, d);
      io::write_f64_array(os, t.data(), t.size());
    }
  }

  static TransformerModel deserialize(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
      throw ParseError("model file: bad magic");
    const uint32_t version = io::read_raw<uint32_t>(is);
    if (version != kVersion)
      throw ParseError(strf("model file: unsupported version %u", version));
    ModelConfig cfg;
    cfg.vocab_size = io::read_raw<uint64_t>(is);
    cfg.d_model = io::read_raw<uint64_t>(is);
    cfg.n_layers = io::read_raw<uint64_t>(is);
    cfg.n_heads = io::read_raw<uint64_t>(is);
    cfg.d_ff = io::read_raw<uint64_t>(is);
    cfg.max_seq_len = io::read_raw<uint64_t>(is);
    cfg.seed = io::read_raw<uint64_t>(is);
    cfg.validate();

    TransformerModel m;
    m.cfg_ = cfg;
    m.layers_.resize(cfg.n_layers);
    const uint32_t n_tensors = io::read_raw<uint32_t>(is);
    for (uint32_t i = 0; i < n_tensors; ++i) {
      const std::string name = io::read_string(is);
      const uint8_t dtype = io::read_raw<uint8_t>(is);
      if (dtype != 0) throw ParseError(strf("model file: unknown dtype %u", dtype));
      const uint32_t ndim = io::read_raw<uint32_t>(is);
      std::vector<size_t> shape(ndim);
      for (auto& d : shape) d = io::read_raw<uint64_t>(is);
      Tensor t = Tensor::zeros(shape, true);
      io::read_f64_array(is, t.data(), t.size());
      m.place_tensor(name, std::move(t));
    }
    m.check_complete();
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    serialize(os);
    os.flush();
    if (!os) throw IoError("write failed: " + path);
  }

  static TransformerModel load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    return deserialize(is);
  }

  /// Content hash of the serialized model; pins caches to the exact weights.
  std::string fingerprint() const {
    std::ostringstream os(std::ios::binary);
    serialize(os);
    const std::string bytes = os.str();
    return hex64(fnv1a64(bytes.data(), bytes.size()));
  }

 private:
  static void check_choice_ids(const std::vector<int>& choice_ids) {
    if (choice_ids.empty()) throw InputError("answer_logits: no choice ids");
    for (size_t i = 0; i < choice_ids.size(); ++i)
      for (size_t j = i + 1; j < choice_ids.size(); ++j)
        if (choice_ids[i] == choice_ids[j])
          throw InputError(strf("answer_logits: duplicate choice token id %d", choice_ids[i]));
  }

  void place_tensor(const std::string& name, Tensor t) {
    if (name == "tok_embed") {
      tok_embed_ = std::move(t);
      return;
    }
    if (name == "pos_embed") {
      pos_embed_ = std::move(t);
      return;
    }
    if (name == "final_norm") {
      final_norm_gain_ = std::move(t);
      return;
    }
    if (name == "w_out") {
      w_out_ = std::move(t);
      return;
    }
    if (name.rfind("layers.", 0) == 0) {
      const size_t dot = name.find('.', 7);
      if (dot != std::string::npos) {
        size_t idx = layers_.size();
        try {
          idx = std::stoul(name.substr(7, dot - 7));
        } catch (const std::exception&) {
          throw ParseError("model file: unknown tensor " + name);
        }
        if (idx < layers_.size()) {
          const std::string field = name.substr(dot + 1);
          auto& l = layers_[idx];
          if (field == "attn_norm")
            l.attn_norm_gain = std::move(t);
          else if (field == "wq")
            l.wq = std::move(t);
          else if (field == "wk")
            l.wk = std::move(t);
          else if (field == "wv")
            l.wv = std::move(t);
          else if (field == "wo")
            l.wo = std::move(t);
          else if (field == "mlp_norm")
            l.mlp_norm_gain = std::move(t);
          else if (field == "mlp.w_gate")
            l.mlp.w_gate = std::move(t);
          else if (field == "mlp.w_up")
            l.mlp.w_up = std::move(t);
          else if (field == "mlp.w_down")
            l.mlp.w_down = std::move(t);
          else
            throw ParseError("model file: unknown tensor " + name);
          return;
        }
      }
    }
    throw ParseError("model file: unknown tensor " + name);
  }

  void check_complete() const {
    for (const auto& [name, t] : named_parameters())
      if (!t.defined()) throw ParseError("model file: missing tensor " + name);
    for (const auto& l : layers_) l.mlp.check_coupling();
  }

  ModelConfig cfg_;
  Tensor tok_embed_;   // [vocab x d_model]
  Tensor pos_embed_;   // [max_seq_len x d_model]
  Tensor final_norm_gain_;
  Tensor w_out_;       // [vocab x d_model]
  std::vector<TransformerLayer> layers_;
};

}  // namespace prunekit
