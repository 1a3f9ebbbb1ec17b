#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dcrd/common.hpp"

namespace dcrd {

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

struct ModelConfig {
    int vocab_size = 512;
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq = 128;
    std::uint64_t seed = 0;

    int d_k() const { return d_model / n_heads; }

    void validate() const {
        if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1)
            throw ConfigError("model dimensions must be >= 1");
        if (max_seq < 2) throw ConfigError("max_seq must be >= 2");
        if (d_model % n_heads != 0)
            throw ConfigError("d_model must be divisible by n_heads");
    }
};

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

inline std::vector<TensorSpec> param_layout(const ModelConfig& cfg) {
    std::vector<TensorSpec> specs;
    std::size_t off = 0;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        TensorSpec t{std::move(name), std::move(shape), off};
        off += t.numel();
        specs.push_back(std::move(t));
    };
    const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t f = static_cast<std::size_t>(cfg.d_ff);
    add("tok_emb", {v, d});
    add("pos_emb", {static_cast<std::size_t>(cfg.max_seq), d});
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        add(p + "ln1.g", {d});
        add(p + "ln1.b", {d});
        add(p + "attn.wq", {d, d});
        add(p + "attn.bq", {d});
        add(p + "attn.wk", {d, d});
        add(p + "attn.bk", {d});
        add(p + "attn.wv", {d, d});
        add(p + "attn.bv", {d});
        add(p + "attn.wo", {d, d});
        add(p + "attn.bo", {d});
        add(p + "ln2.g", {d});
        add(p + "ln2.b", {d});
        add(p + "ffn.w1", {d, f});
        add(p + "ffn.b1", {f});
        add(p + "ffn.w2", {f, d});
        add(p + "ffn.b2", {d});
    }
    add("ln_f.g", {d});
    add("ln_f.b", {d});
    add("head.w", {d, v});
    add("head.b", {v});
    return specs;
}

inline std::size_t param_count(const ModelConfig& cfg) {
    std::size_t n = 0;
    for (const auto& t : param_layout(cfg)) n += t.numel();
    return n;
}

struct ModelParams {
    ModelConfig config;
    std::vector<float> data;

    float* tensor(const std::vector<TensorSpec>& layout, std::size_t idx) {
        return data.data() + layout[idx].offset;
    }
    const float* tensor(const std::vector<TensorSpec>& layout, std::size_t idx) const {
        return data.data() + layout[idx].offset;
    }

    std::uint64_t checksum() const { return checksum_floats(data); }
};

// Offsets of one block's tensors inside the flat parameter vector.
struct LayerView {
    const float* ln1_g;
    const float* ln1_b;
    const float* wq;
    const float* bq;
    const float* wk;
    const float* bk;
    const float* wv;
    const float* bv;
    const float* wo;
    const float* bo;
    const float* ln2_g;
    const float* ln2_b;
    const float* w1;
    const float* b1;
    const float* w2;
    const float* b2;
};

struct ParamView {
    const float* tok_emb;
    const float* pos_emb;
    std::vector<LayerView> layers;
    const float* ln_f_g;
    const float* ln_f_b;
    const float* head_w;
    const float* head_b;
};

inline ParamView make_view(const ModelParams& p) {
    auto layout = param_layout(p.config);
    ParamView v{};
    std::size_t i = 0;
    auto next = [&]() { return p.data.data() + layout[i++].offset; };
    v.tok_emb = next();
    v.pos_emb = next();
    v.layers.resize(static_cast<std::size_t>(p.config.n_layers));
    for (auto& l : v.layers) {
        l.ln1_g = next();
        l.ln1_b = next();
        l.wq = next();
        l.bq = next();
        l.wk = next();
        l.bk = next();
        l.wv = next();
        l.bv = next();
        l.wo = next();
        l.bo = next();
        l.ln2_g = next();
        l.ln2_b = next();
        l.w1 = next();
        l.b1 = next();
        l.w2 = next();
        l.b2 = next();
    }
    v.ln_f_g = next();
    v.ln_f_b = next();
    v.head_w = next();
    v.head_b = next();
    return v;
}

inline ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.data.assign(param_count(cfg), 0.0f);
    Rng rng(derive_seed(cfg.seed, "model-init"));
    for (const auto& t : param_layout(cfg)) {
        float* dst = p.data.data() + t.offset;
        const bool is_bias_or_offset =
            t.name.ends_with(".b") || t.name.ends_with("bq") || t.name.ends_with("bk") ||
            t.name.ends_with("bv") || t.name.ends_with("bo") || t.name.ends_with("b1") ||
            t.name.ends_with("b2");
        const bool is_ln_gain = t.name.ends_with(".g");
        if (is_ln_gain) {
            std::fill(dst, dst + t.numel(), 1.0f);
        } else if (is_bias_or_offset) {
            // zeros
        } else {
            for (std::size_t i = 0; i < t.numel(); ++i)
                dst[i] = static_cast<float>(rng.gaussian() * 0.02);
        }
    }
    return p;
}

namespace detail {

inline void layer_norm(const float* x, const float* g, const float* b, int d, float* out) {
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) {
        const float c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (int i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * g[i] + b[i];
}

// y = x W + b, W row-major [in][out]
inline void affine(const float* x, const float* w, const float* b, int din, int dout, float* y) {
    for (int j = 0; j < dout; ++j) y[j] = b[j];
    for (int i = 0; i < din; ++i) {
        const float xi = x[i];
        const float* row = w + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) y[j] += xi * row[j];
    }
}

inline float gelu(float x) {
    const float c = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

inline void softmax_inplace(float* v, int n) {
    float m = v[0];
    for (int i = 1; i < n; ++i) m = std::max(m, v[i]);
    float sum = 0.0f;
    for (int i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - m);
        sum += v[i];
    }
    const float inv = 1.0f / sum;
    for (int i = 0; i < n; ++i) v[i] *= inv;
}

}  // namespace detail

// Attention weights captured during a forward pass: entry (l, h, q, k) is the
// weight of key k for query q; zero whenever k > q.
struct AttentionTensor {
    int n_layers = 0;
    int n_heads = 0;
    int seq_len = 0;
    std::vector<float> values;

    float at(int l, int h, int q, int k) const {
        return values[((static_cast<std::size_t>(l) * n_heads + h) * seq_len + q) * seq_len + k];
    }
    float& at(int l, int h, int q, int k) {
        return values[((static_cast<std::size_t>(l) * n_heads + h) * seq_len + q) * seq_len + k];
    }
};

struct CaptureFlags {
    bool attention = false;
    bool hidden = false;
};

struct ForwardOutput {
    int seq_len = 0;
    int vocab_size = 0;
    std::vector<float> logits;  // [seq_len x vocab_size]
    AttentionTensor attention;  // empty unless requested
    // hidden_states[l] is the block-l output, [seq_len x d_model]
    std::vector<std::vector<float>> hidden_states;

    const float* logits_at(int pos) const {
        return logits.data() + static_cast<std::size_t>(pos) * vocab_size;
    }
};

// Incremental decoder state over read-only params. Feeding tokens one at a
// time with a KV cache produces positions bit-identical to a full forward,
// since every per-position kernel runs in the same order either way.
class DecoderSession {
public:
    DecoderSession(const ModelParams& params, CaptureFlags capture = {})
        : params_(&params), view_(make_view(params)), capture_(capture) {
        const ModelConfig& cfg = params.config;
        cfg.validate();
        k_cache_.assign(static_cast<std::size_t>(cfg.n_layers), {});
        v_cache_.assign(static_cast<std::size_t>(cfg.n_layers), {});
        if (capture_.attention)
            attn_rows_.assign(static_cast<std::size_t>(cfg.n_layers) * cfg.n_heads, {});
        if (capture_.hidden) hidden_.assign(static_cast<std::size_t>(cfg.n_layers), {});
    }

    const ModelConfig& config() const { return params_->config; }
    int length() const { return static_cast<int>(tokens_.size()); }
    const TokenSeq& tokens() const { return tokens_; }

    // Appends one token; returns next-token logits at this position.
    const std::vector<float>& feed(TokenId tok) {
        const ModelConfig& cfg = params_->config;
        if (tok < 0 || tok >= cfg.vocab_size)
            throw InputError("token id " + std::to_string(tok) + " out of range");
        const int pos = length();
        if (pos >= cfg.max_seq) throw InputError("sequence exceeds max_seq");
        tokens_.push_back(tok);

        const int d = cfg.d_model;
        const int dk = cfg.d_k();
        std::vector<float> x(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i)
            x[i] = view_.tok_emb[static_cast<std::size_t>(tok) * d + i] +
                   view_.pos_emb[static_cast<std::size_t>(pos) * d + i];

        std::vector<float> a(static_cast<std::size_t>(d));
        std::vector<float> q(static_cast<std::size_t>(d));
        std::vector<float> att_out(static_cast<std::size_t>(d));
        std::vector<float> proj(static_cast<std::size_t>(d));
        std::vector<float> h1(static_cast<std::size_t>(cfg.d_ff));
        std::vector<float> scores;

        for (int l = 0; l < cfg.n_layers; ++l) {
            const LayerView& lv = view_.layers[static_cast<std::size_t>(l)];
            detail::layer_norm(x.data(), lv.ln1_g, lv.ln1_b, d, a.data());

            auto& kc = k_cache_[static_cast<std::size_t>(l)];
            auto& vc = v_cache_[static_cast<std::size_t>(l)];
            kc.resize(static_cast<std::size_t>(pos + 1) * d);
            vc.resize(static_cast<std::size_t>(pos + 1) * d);
            detail::affine(a.data(), lv.wq, lv.bq, d, d, q.data());
            detail::affine(a.data(), lv.wk, lv.bk, d, d, kc.data() + static_cast<std::size_t>(pos) * d);
            detail::affine(a.data(), lv.wv, lv.bv, d, d, vc.data() + static_cast<std::size_t>(pos) * d);

            std::fill(att_out.begin(), att_out.end(), 0.0f);
            const float scale = 1.0f / std::sqrt(static_cast<float>(dk));
            scores.assign(static_cast<std::size_t>(pos + 1), 0.0f);
            for (int h = 0; h < cfg.n_heads; ++h) {
                const int ho = h * dk;
                for (int t = 0; t <= pos; ++t) {
                    float s = 0.0f;
                    const float* kt = kc.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) s += q[static_cast<std::size_t>(ho + i)] * kt[i];
                    scores[static_cast<std::size_t>(t)] = s * scale;
                }
                detail::softmax_inplace(scores.data(), pos + 1);
                for (int t = 0; t <= pos; ++t) {
                    const float w = scores[static_cast<std::size_t>(t)];
                    const float* vt = vc.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) att_out[static_cast<std::size_t>(ho + i)] += w * vt[i];
                }
                if (capture_.attention)
                    attn_rows_[static_cast<std::size_t>(l) * cfg.n_heads + h].emplace_back(
                        scores.begin(), scores.begin() + pos + 1);
            }

            detail::affine(att_out.data(), lv.wo, lv.bo, d, d, proj.data());
            for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];

            detail::layer_norm(x.data(), lv.ln2_g, lv.ln2_b, d, a.data());
            detail::affine(a.data(), lv.w1, lv.b1, d, cfg.d_ff, h1.data());
            for (int i = 0; i < cfg.d_ff; ++i) h1[static_cast<std::size_t>(i)] = detail::gelu(h1[static_cast<std::size_t>(i)]);
            detail::affine(h1.data(), lv.w2, lv.b2, cfg.d_ff, d, proj.data());
            for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];

            if (capture_.hidden) {
                auto& hl = hidden_[static_cast<std::size_t>(l)];
                hl.insert(hl.end(), x.begin(), x.end());
            }
        }

        detail::layer_norm(x.data(), view_.ln_f_g, view_.ln_f_b, d, a.data());
        logits_.assign(static_cast<std::size_t>(cfg.vocab_size), 0.0f);
        detail::affine(a.data(), view_.head_w, view_.head_b, d, cfg.vocab_size, logits_.data());
        for (float lg : logits_)
            if (!std::isfinite(lg)) throw NumericError("non-finite logit at position " + std::to_string(pos));
        return logits_;
    }

    const std::vector<float>& feed(const TokenSeq& toks) {
        if (toks.empty()) throw InputError("empty token sequence");
        for (TokenId t : toks) feed(t);
        return logits_;
    }

    const std::vector<float>& last_logits() const { return logits_; }

    // Captured attention row for (layer, head, query): length query+1.
    const std::vector<float>& attention_row(int l, int h, int q) const {
        return attn_rows_[static_cast<std::size_t>(l) * config().n_heads + h][static_cast<std::size_t>(q)];
    }

    bool captures_attention() const { return capture_.attention; }

    // Block-l hidden vector at a position.
    const float* hidden_at(int l, int pos) const {
        return hidden_[static_cast<std::size_t>(l)].data() +
               static_cast<std::size_t>(pos) * config().d_model;
    }

    AttentionTensor attention_tensor() const {
        const ModelConfig& cfg = config();
        AttentionTensor t;
        t.n_layers = cfg.n_layers;
        t.n_heads = cfg.n_heads;
        t.seq_len = length();
        t.values.assign(static_cast<std::size_t>(cfg.n_layers) * cfg.n_heads * t.seq_len * t.seq_len, 0.0f);
        for (int l = 0; l < cfg.n_layers; ++l)
            for (int h = 0; h < cfg.n_heads; ++h)
                for (int q = 0; q < t.seq_len; ++q) {
                    const auto& row = attention_row(l, h, q);
                    for (int k = 0; k <= q; ++k) t.at(l, h, q, k) = row[static_cast<std::size_t>(k)];
                }
        return t;
    }

private:
    const ModelParams* params_;
    ParamView view_;
    CaptureFlags capture_;
    TokenSeq tokens_;
    std::vector<std::vector<float>> k_cache_;  // per layer, [pos x d_model]
    std::vector<std::vector<float>> v_cache_;
    std::vector<std::vector<std::vector<float>>> attn_rows_;  // [l*H+h][q] -> row
    std::vector<std::vector<float>> hidden_;                  // [l] -> [pos x d_model]
    std::vector<float> logits_;
};

inline ForwardOutput forward(const ModelParams& params, const TokenSeq& tokens,
                             CaptureFlags capture = {}) {
    if (tokens.empty()) throw InputError("empty token sequence");
    if (static_cast<int>(tokens.size()) > params.config.max_seq)
        throw InputError("sequence exceeds max_seq");
    DecoderSession sess(params, capture);
    ForwardOutput out;
    out.seq_len = static_cast<int>(tokens.size());
    out.vocab_size = params.config.vocab_size;
    out.logits.reserve(static_cast<std::size_t>(out.seq_len) * out.vocab_size);
    for (TokenId t : tokens) {
        const auto& lg = sess.feed(t);
        out.logits.insert(out.logits.end(), lg.begin(), lg.end());
    }
    if (capture.attention) out.attention = sess.attention_tensor();
    if (capture.hidden) {
        out.hidden_states.resize(static_cast<std::size_t>(params.config.n_layers));
        for (int l = 0; l < params.config.n_layers; ++l) {
            auto& hl = out.hidden_states[static_cast<std::size_t>(l)];
            hl.resize(static_cast<std::size_t>(out.seq_len) * params.config.d_model);
            for (int p = 0; p < out.seq_len; ++p)
                std::copy_n(sess.hidden_at(l, p), params.config.d_model,
                            hl.data() + static_cast<std::size_t>(p) * params.config.d_model);
        }
    }
    return out;
}

// Argmax with ties broken toward the lowest token id.
inline TokenId argmax_token(const std::vector<float>& logits) {
    TokenId best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i)
        if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
    return best;
}

inline TokenSeq generate_greedy(const ModelParams& params, const TokenSeq& prompt, int max_new,
                                TokenId end_token = -1) {
    if (prompt.empty()) throw InputError("empty prompt");
    if (static_cast<int>(prompt.size()) + max_new > params.config.max_seq)
        throw InputError("prompt + max_new exceeds max_seq");
    TokenSeq out = prompt;
    if (max_new == 0) return out;
    DecoderSession sess(params);
    sess.feed(prompt);
    for (int step = 0; step < max_new; ++step) {
        const TokenId next = argmax_token(sess.last_logits());
        if (next == end_token) break;
        out.push_back(next);
        if (step + 1 < max_new) sess.feed(next);
    }
    return out;
}

}  // namespace dcrd
