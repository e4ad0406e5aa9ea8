#pragma once

// Conditional residual transformer predicting flow-matching velocities.
//
// A flat input x in R^d is lifted to n_tokens tokens of width hidden_dim.
// Time (sinusoidal features + 2-layer MLP) and class (lookup table)
// embeddings are added to every token. Each block is pre-norm:
//   h += gate * Attn(LN(h));  h += gate * MLP(LN(h))
// and a final LN + linear head maps the tokens back to R^d.
// Dropping a block bypasses both residual branches together.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "entprune/numerics/ops.hpp"

namespace entprune {

struct BackboneConfig {
    std::size_t data_dim = 2;
    std::size_t hidden_dim = 16;
    std::size_t n_blocks = 8;
    std::size_t n_heads = 2;
    std::size_t n_classes = 4;
    std::size_t n_tokens = 4;
    std::size_t time_features = 16;
    std::size_t mlp_ratio = 4;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(data_dim > 0 && hidden_dim > 0 && n_heads > 0 && n_classes > 0 && n_tokens > 0,
                        "backbone dimensions must be positive");
        detail::require(hidden_dim % n_heads == 0, "hidden_dim must be divisible by n_heads");
        detail::require(n_blocks >= 2, "n_blocks must be >= 2");
        detail::require(time_features >= 2 && time_features % 2 == 0, "time_features must be even and >= 2");
        detail::require(mlp_ratio > 0, "mlp_ratio must be positive");
    }

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

// Which residual blocks participate in the forward pass.
class SubnetMask {
  public:
    SubnetMask() = default;
    explicit SubnetMask(std::vector<bool> active) : active_(std::move(active)) {
        detail::require(n_active() >= 1, "subnet mask must keep at least one block active");
    }

    static SubnetMask full(std::size_t n) { return SubnetMask(std::vector<bool>(n, true)); }

    static SubnetMask from_bits(const std::string& bits) {
        std::vector<bool> a;
        for (char c : bits) {
            detail::require(c == '0' || c == '1', "mask bits must be '0'/'1'");
            a.push_back(c == '1');
        }
        return SubnetMask(std::move(a));
    }

    std::size_t size() const noexcept { return active_.size(); }
    bool active(std::size_t i) const { return active_.at(i); }
    const std::vector<bool>& flags() const noexcept { return active_; }

    std::size_t n_active() const noexcept {
        std::size_t n = 0;
        for (bool b : active_) n += b;
        return n;
    }

    std::vector<std::size_t> active_blocks() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < active_.size(); ++i)
            if (active_[i]) out.push_back(i);
        return out;
    }

    SubnetMask without(std::size_t block) const {
        auto a = active_;
        a.at(block) = false;
        return SubnetMask(std::move(a));
    }

    // Blockwise inclusion: every block active here is active in `other`.
    bool subset_of(const SubnetMask& other) const {
        if (other.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (active_[i] && !other.active_[i]) return false;
        return true;
    }

    std::string bits() const {
        std::string s;
        for (bool b : active_) s += b ? '1' : '0';
        return s;
    }

    friend bool operator==(const SubnetMask&, const SubnetMask&) = default;

  private:
    std::vector<bool> active_;
};

// Ordered named parameter tensors. Iteration order is registration order.
class ParamStore {
  public:
    void add(std::string name, Tensor value) {
        detail::require(!index_.contains(name), "duplicate parameter " + name);
        index_.emplace(name, names_.size());
        names_.push_back(std::move(name));
        values_.push_back(std::move(value));
    }

    bool contains(const std::string& name) const { return index_.contains(name); }
    const Tensor& at(const std::string& name) const { return values_.at(lookup(name)); }
    Tensor& at(const std::string& name) { return values_.at(lookup(name)); }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const Tensor& value(std::size_t i) const { return values_.at(i); }
    Tensor& value(std::size_t i) { return values_.at(i); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.names_ == b.names_ && a.values_ == b.values_;
    }

  private:
    std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw PreconditionError("unknown parameter " + name);
        return it->second;
    }

    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }

// Parameters of one block, closed form: two norms, four attention
// projections with bias, and a biased two-layer MLP.
inline std::size_t block_param_count(const BackboneConfig& c) {
    const std::size_t h = c.hidden_dim, f = c.mlp_ratio * h;
    return 4 * h + 4 * (h * h + h) + (h * f + f) + (f * h + h);
}

inline std::size_t shared_param_count(const BackboneConfig& c) {
    const std::size_t h = c.hidden_dim, th = c.n_tokens * h;
    return (c.data_dim * th + th)                                   // input lift
           + th                                                     // token positions
           + (c.time_features * h + h) + (h * h + h)                // time MLP
           + c.n_classes * h                                        // class table
           + 2 * h                                                  // final norm
           + (th * c.data_dim + c.data_dim);                        // head
}

inline std::size_t param_count(const BackboneConfig& c, const SubnetMask& mask) {
    return shared_param_count(c) + mask.n_active() * block_param_count(c);
}

inline Tensor sinusoidal_time_features(std::span<const double> t, std::size_t n_features) {
    const std::size_t half = n_features / 2;
    Tensor out({t.size(), n_features});
    for (std::size_t r = 0; r < t.size(); ++r)
        for (std::size_t j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            const double arg = 1000.0 * t[r] * freq;
            out(r, j) = std::cos(arg);
            out(r, half + j) = std::sin(arg);
        }
    return out;
}

class VelocityModel {
  public:
    VelocityModel() = default;

    explicit VelocityModel(BackboneConfig config) : config_(config), block_scales_(config.n_blocks, 1.0) {
        config_.validate();
        std::mt19937_64 rng(config_.seed);
        const std::size_t h = config_.hidden_dim, th = config_.n_tokens * h, f = config_.mlp_ratio * h;
        const std::size_t d = config_.data_dim;
        auto w = [&](std::size_t in, std::size_t out, double gain = 1.0) {
            return Tensor::randn({in, out}, rng, gain / std::sqrt(static_cast<double>(in)));
        };
        params_.add("embed.in.w", w(d, th));
        params_.add("embed.in.b", Tensor({th}));
        params_.add("embed.pos", Tensor::randn({config_.n_tokens, h}, rng, 0.5));
        params_.add("embed.time.w1", w(config_.time_features, h));
        params_.add("embed.time.b1", Tensor({h}));
        params_.add("embed.time.w2", w(h, h));
        params_.add("embed.time.b2", Tensor({h}));
        params_.add("embed.class", Tensor::randn({config_.n_classes, h}, rng, 1.0));
        for (std::size_t i = 0; i < config_.n_blocks; ++i) {
            const std::string p = block_prefix(i);
            params_.add(p + "norm1.g", Tensor({h}, 1.0));
            params_.add(p + "norm1.b", Tensor({h}));
            for (const char* proj : {"attn.wq", "attn.wk", "attn.wv"}) {
                params_.add(p + proj, w(h, h));
                params_.add(p + std::string(proj).replace(5, 1, "b"), Tensor({h}));
            }
            params_.add(p + "attn.wo", w(h, h, 0.5));
            params_.add(p + "attn.bo", Tensor({h}));
            params_.add(p + "norm2.g", Tensor({h}, 1.0));
            params_.add(p + "norm2.b", Tensor({h}));
            params_.add(p + "mlp.w1", w(h, f));
            params_.add(p + "mlp.b1", Tensor({f}));
            params_.add(p + "mlp.w2", w(f, h, 0.5));
            params_.add(p + "mlp.b2", Tensor({h}));
        }
        params_.add("head.norm.g", Tensor({h}, 1.0));
        params_.add("head.norm.b", Tensor({h}));
        params_.add("head.w", w(th, d));
        params_.add("head.b", Tensor({d}));
    }

    // Rebuilds a model from stored parameters (checkpoint loading, block deletion).
    VelocityModel(BackboneConfig config, ParamStore params, std::vector<double> block_scales)
        : config_(config), params_(std::move(params)), block_scales_(std::move(block_scales)) {
        config_.validate();
        detail::require(block_scales_.size() == config_.n_blocks, "block_scales length must equal n_blocks");
        VelocityModel reference(config_);
        detail::require(reference.params_.size() == params_.size(), "parameter set does not match config");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            detail::require(params_.name(i) == reference.params_.name(i), "unexpected parameter " + params_.name(i));
            detail::require(params_.value(i).shape() == reference.params_.value(i).shape(),
                            "shape mismatch for parameter " + params_.name(i));
        }
    }

    const BackboneConfig& config() const noexcept { return config_; }
    const ParamStore& params() const noexcept { return params_; }
    ParamStore& params() noexcept { return params_; }
    const std::vector<double>& block_scales() const noexcept { return block_scales_; }
    std::vector<double>& block_scales() noexcept { return block_scales_; }
    std::size_t n_blocks() const noexcept { return config_.n_blocks; }
    SubnetMask full_mask() const { return SubnetMask::full(config_.n_blocks); }

    static bool is_block_param(const std::string& name) { return name.rfind("blocks.", 0) == 0; }

    static std::size_t block_of(const std::string& name) {
        const auto dot = name.find('.', 7);
        return static_cast<std::size_t>(std::stoul(name.substr(7, dot - 7)));
    }

    // Names of parameters participating under `mask` (shared + active blocks), in store order.
    std::vector<std::string> active_parameter_names(const SubnetMask& mask) const {
        check_mask(mask);
        std::vector<std::string> out;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& n = params_.name(i);
            if (!is_block_param(n) || mask.active(block_of(n))) out.push_back(n);
        }
        return out;
    }

    std::size_t parameter_count(const SubnetMask& mask) const {
        std::size_t n = 0;
        for (const auto& name : active_parameter_names(mask)) n += params_.at(name).size();
        return n;
    }

    // Zeroes both residual output projections of a block so it contributes nothing.
    void zero_residual(std::size_t block) {
        const std::string p = block_prefix(block);
        for (const char* n : {"attn.wo", "attn.bo", "mlp.w2", "mlp.b2"})
            for (auto& v : params_.at(p + n).data()) v = 0.0;
    }

    // A model with inactive blocks physically removed and the survivors renumbered.
    VelocityModel pruned(const SubnetMask& mask) const {
        check_mask(mask);
        BackboneConfig c = config_;
        c.n_blocks = mask.n_active();
        detail::require(c.n_blocks >= 2, "physically pruned backbones need at least two blocks");
        const auto keep = mask.active_blocks();
        std::unordered_map<std::size_t, std::size_t> renumber;
        for (std::size_t j = 0; j < keep.size(); ++j) renumber[keep[j]] = j;
        ParamStore store;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& n = params_.name(i);
            if (!is_block_param(n)) {
                store.add(n, params_.value(i));
                continue;
            }
            const std::size_t b = block_of(n);
            if (!mask.active(b)) continue;
            store.add(block_prefix(renumber[b]) + n.substr(block_prefix(b).size()), params_.value(i));
        }
        // Shared parameters precede and follow the blocks; restore canonical order.
        ParamStore ordered;
        VelocityModel reference(c);
        for (std::size_t i = 0; i < reference.params_.size(); ++i)
            ordered.add(reference.params_.name(i), store.at(reference.params_.name(i)));
        std::vector<double> scales;
        for (std::size_t b : keep) scales.push_back(block_scales_[b]);
        return VelocityModel(c, std::move(ordered), std::move(scales));
    }

    void check_mask(const SubnetMask& mask) const {
        if (mask.size() != config_.n_blocks)
            throw PreconditionError("mask length " + std::to_string(mask.size()) + " != n_blocks " +
                                    std::to_string(config_.n_blocks));
    }

    void check_labels(const std::vector<std::size_t>& labels) const {
        for (std::size_t l : labels)
            if (l >= config_.n_classes)
                throw PreconditionError("label " + std::to_string(l) + " >= n_classes " + std::to_string(config_.n_classes));
    }

    // Registers the active parameters on `tape` and records the forward pass.
    // x: [b x data_dim], t: b values in [0,1], labels: b class ids. Output [b x data_dim].
    Var forward(Tape& tape, const SubnetMask& mask, const Tensor& x, std::span<const double> t,
                const std::vector<std::size_t>& labels, const std::string& param_prefix = "") const {
        check_mask(mask);
        check_labels(labels);
        const std::size_t b = x.rows();
        detail::require(x.cols() == config_.data_dim, "input width must equal data_dim");
        detail::require(t.size() == b && labels.size() == b, "batch sizes of x, t and labels must agree");

        std::unordered_map<std::string, Var> vars;
        for (const auto& name : active_parameter_names(mask))
            vars.emplace(name, tape.parameter(param_prefix + name, params_.at(name)));
        auto P = [&](const std::string& n) { return vars.at(n); };

        const std::size_t h = config_.hidden_dim, T = config_.n_tokens;
        Var xin = tape.constant(x, "input");
        Var tok = ops::add_rowwise(ops::matmul(xin, P("embed.in.w")), P("embed.in.b"));
        tok = ops::reshape(tok, {b * T, h});
        tok = ops::add(tok, ops::tile_rows(P("embed.pos"), b));

        Var tf = tape.constant(sinusoidal_time_features(t, config_.time_features), "time_features");
        Var temb = ops::gelu(ops::add_rowwise(ops::matmul(tf, P("embed.time.w1")), P("embed.time.b1")));
        temb = ops::add_rowwise(ops::matmul(temb, P("embed.time.w2")), P("embed.time.b2"));
        Var cond = ops::add(temb, ops::gather_rows(P("embed.class"), labels));
        Var hs = ops::add(tok, ops::repeat_rows(cond, T));

        for (std::size_t i : mask.active_blocks()) hs = block_forward(hs, b, i, P);

        Var out = ops::add_rowwise(ops::mul_rowwise(ops::layer_norm(hs), P("head.norm.g")), P("head.norm.b"));
        out = ops::reshape(out, {b, T * h});
        return ops::add_rowwise(ops::matmul(out, P("head.w")), P("head.b"));
    }

    Tensor predict(const SubnetMask& mask, const Tensor& x, std::span<const double> t,
                   const std::vector<std::size_t>& labels) const {
        Tape tape;
        return forward(tape, mask, x, t, labels).value();
    }

  private:
    template <class Lookup>
    Var block_forward(Var hs, std::size_t b, std::size_t i, Lookup&& P) const {
        const std::size_t h = config_.hidden_dim, T = config_.n_tokens, nh = config_.n_heads, hd = h / nh;
        const std::string p = block_prefix(i);
        const double gate = block_scales_[i];

        Var a = ops::add_rowwise(ops::mul_rowwise(ops::layer_norm(hs), P(p + "norm1.g")), P(p + "norm1.b"));
        auto heads = [&](const char* w, const char* bias) {
            Var y = ops::add_rowwise(ops::matmul(a, P(p + w)), P(p + bias));
            y = ops::permute(ops::reshape(y, {b, T, nh, hd}), {0, 2, 1, 3});
            return ops::reshape(y, {b * nh, T, hd});
        };
        Var q = heads("attn.wq", "attn.bq");
        Var k = heads("attn.wk", "attn.bk");
        Var v = heads("attn.wv", "attn.bv");
        Var att = ops::softmax(ops::scale(ops::bmm(q, ops::transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(hd))));
        Var o = ops::bmm(att, v);
        o = ops::reshape(ops::permute(ops::reshape(o, {b, nh, T, hd}), {0, 2, 1, 3}), {b * T, h});
        o = ops::add_rowwise(ops::matmul(o, P(p + "attn.wo")), P(p + "attn.bo"));
        if (gate != 1.0) o = ops::scale(o, gate);
        hs = ops::add(hs, o);

        Var m = ops::add_rowwise(ops::mul_rowwise(ops::layer_norm(hs), P(p + "norm2.g")), P(p + "norm2.b"));
        m = ops::gelu(ops::add_rowwise(ops::matmul(m, P(p + "mlp.w1")), P(p + "mlp.b1")));
        m = ops::add_rowwise(ops::matmul(m, P(p + "mlp.w2")), P(p + "mlp.b2"));
        if (gate != 1.0) m = ops::scale(m, gate);
        return ops::add(hs, m);
    }

    BackboneConfig config_;
    ParamStore params_;
    std::vector<double> block_scales_;
};

// Multiply-accumulates of one single-sample forward pass, counted analytically.
struct MacBreakdown {
    std::uint64_t shared = 0;
    std::uint64_t per_block = 0;
    std::size_t active_blocks = 0;
    std::uint64_t total() const { return shared + per_block * active_blocks; }
};

inline MacBreakdown analytic_macs(const BackboneConfig& c, const SubnetMask& mask) {
    const std::uint64_t h = c.hidden_dim, T = c.n_tokens, d = c.data_dim, f = c.mlp_ratio * h;
    MacBreakdown m;
    m.shared = d * T * h + c.time_features * h + h * h + T * h * d;
    m.per_block = 4 * T * h * h   // q, k, v, o projections
                  + 2 * T * T * h // scores and weighted values over all heads
                  + 2 * T * h * f; // MLP
    m.active_blocks = mask.n_active();
    return m;
}

} // namespace entprune
