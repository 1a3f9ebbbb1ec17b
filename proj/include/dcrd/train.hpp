#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dcrd/common.hpp"
#include "dcrd/model.hpp"

namespace dcrd {

struct TrainConfig {
    int steps = 2000;
    int batch = 8;
    float learning_rate = 1e-3f;
    std::uint64_t seed = 0;
};

struct TrainReport {
    float initial_loss = 0.0f;
    float final_loss = 0.0f;
    std::vector<float> loss_curve;  // one entry per step
};

namespace detail {

struct LayerCache {
    std::vector<float> x_in;     // [T x d] block input
    std::vector<float> a1;       // [T x d] ln1 output
    std::vector<float> ln1_mu;   // [T]
    std::vector<float> ln1_inv;  // [T]
    std::vector<float> q, k, v;  // [T x d]
    std::vector<float> att;      // [H x T x T]
    std::vector<float> att_out;  // [T x d]
    std::vector<float> x_mid;    // [T x d] after attention residual
    std::vector<float> a2;       // [T x d] ln2 output
    std::vector<float> ln2_mu, ln2_inv;
    std::vector<float> h_pre;  // [T x f]
    std::vector<float> h_act;  // [T x f]
};

struct SeqCache {
    std::vector<LayerCache> layers;
    std::vector<float> x_final;  // [T x d]
    std::vector<float> af;       // [T x d] ln_f output
    std::vector<float> lnf_mu, lnf_inv;
    std::vector<float> probs;  // [T x V] softmax of logits
};

inline void layer_norm_cached(const float* x, const float* g, const float* b, int d, float* out,
                              float& mu_out, float& inv_out) {
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
    mu_out = mean;
    inv_out = inv;
}

// Backward of y = ln(x)*g + b given cached (mu, inv). Adds into dx, dg, db.
inline void layer_norm_backward(const float* x, const float* g, const float* dy, int d, float mu,
                                float inv, float* dx, float* dg, float* db) {
    float sum_gdy = 0.0f;
    float sum_gdy_xhat = 0.0f;
    for (int i = 0; i < d; ++i) {
        const float xhat = (x[i] - mu) * inv;
        const float gdy = g[i] * dy[i];
        sum_gdy += gdy;
        sum_gdy_xhat += gdy * xhat;
        dg[i] += dy[i] * xhat;
        db[i] += dy[i];
    }
    const float invd = 1.0f / static_cast<float>(d);
    for (int i = 0; i < d; ++i) {
        const float xhat = (x[i] - mu) * inv;
        dx[i] += inv * (g[i] * dy[i] - invd * sum_gdy - xhat * invd * sum_gdy_xhat);
    }
}

inline float gelu_grad(float x) {
    const float c = 0.7978845608028654f;
    const float u = c * (x + 0.044715f * x * x * x);
    const float t = std::tanh(u);
    const float du = c * (1.0f + 3.0f * 0.044715f * x * x);
    return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
}

// dx += dy W^T; dW += x^T dy; db += dy
inline void affine_backward(const float* x, const float* w, const float* dy, int din, int dout,
                            float* dx, float* dw, float* db) {
    for (int j = 0; j < dout; ++j) db[j] += dy[j];
    for (int i = 0; i < din; ++i) {
        const float* wrow = w + static_cast<std::size_t>(i) * dout;
        float* dwrow = dw + static_cast<std::size_t>(i) * dout;
        const float xi = x[i];
        float acc = 0.0f;
        for (int j = 0; j < dout; ++j) {
            acc += dy[j] * wrow[j];
            dwrow[j] += xi * dy[j];
        }
        dx[i] += acc;
    }
}

struct GradView {
    float* tok_emb;
    float* pos_emb;
    struct LayerGrad {
        float *ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        float *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
    };
    std::vector<LayerGrad> layers;
    float *ln_f_g, *ln_f_b, *head_w, *head_b;
};

inline GradView make_grad_view(const ModelConfig& cfg, std::vector<float>& grads) {
    auto layout = param_layout(cfg);
    GradView v{};
    std::size_t i = 0;
    auto next = [&]() { return grads.data() + layout[i++].offset; };
    v.tok_emb = next();
    v.pos_emb = next();
    v.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : v.layers) {
        l.ln1_g = next(); l.ln1_b = next();
        l.wq = next(); l.bq = next();
        l.wk = next(); l.bk = next();
        l.wv = next(); l.bv = next();
        l.wo = next(); l.bo = next();
        l.ln2_g = next(); l.ln2_b = next();
        l.w1 = next(); l.b1 = next();
        l.w2 = next(); l.b2 = next();
    }
    v.ln_f_g = next();
    v.ln_f_b = next();
    v.head_w = next();
    v.head_b = next();
    return v;
}

// Forward with caches, then backward; accumulates parameter gradients and the
// summed next-token cross-entropy. Returns (loss_sum, n_predictions).
inline std::pair<double, int> seq_forward_backward(const ModelParams& params, const ParamView& pv,
                                                   GradView& gv, const TokenSeq& toks) {
    const ModelConfig& cfg = params.config;
    const int T = static_cast<int>(toks.size());
    const int d = cfg.d_model;
    const int f = cfg.d_ff;
    const int V = cfg.vocab_size;
    const int H = cfg.n_heads;
    const int dk = cfg.d_k();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dk));

    SeqCache c;
    c.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    std::vector<float> x(static_cast<std::size_t>(T) * d);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < d; ++i)
            x[static_cast<std::size_t>(t) * d + i] =
                pv.tok_emb[static_cast<std::size_t>(toks[static_cast<std::size_t>(t)]) * d + i] +
                pv.pos_emb[static_cast<std::size_t>(t) * d + i];

    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = c.layers[static_cast<std::size_t>(l)];
        const LayerView& lv = pv.layers[static_cast<std::size_t>(l)];
        lc.x_in = x;
        lc.a1.resize(static_cast<std::size_t>(T) * d);
        lc.ln1_mu.resize(static_cast<std::size_t>(T));
        lc.ln1_inv.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            layer_norm_cached(lc.x_in.data() + static_cast<std::size_t>(t) * d, lv.ln1_g, lv.ln1_b,
                              d, lc.a1.data() + static_cast<std::size_t>(t) * d,
                              lc.ln1_mu[static_cast<std::size_t>(t)],
                              lc.ln1_inv[static_cast<std::size_t>(t)]);
        lc.q.assign(static_cast<std::size_t>(T) * d, 0.0f);
        lc.k.assign(static_cast<std::size_t>(T) * d, 0.0f);
        lc.v.assign(static_cast<std::size_t>(T) * d, 0.0f);
        for (int t = 0; t < T; ++t) {
            const float* a = lc.a1.data() + static_cast<std::size_t>(t) * d;
            dcrd::detail::affine(a, lv.wq, lv.bq, d, d, lc.q.data() + static_cast<std::size_t>(t) * d);
            dcrd::detail::affine(a, lv.wk, lv.bk, d, d, lc.k.data() + static_cast<std::size_t>(t) * d);
            dcrd::detail::affine(a, lv.wv, lv.bv, d, d, lc.v.data() + static_cast<std::size_t>(t) * d);
        }
        lc.att.assign(static_cast<std::size_t>(H) * T * T, 0.0f);
        lc.att_out.assign(static_cast<std::size_t>(T) * d, 0.0f);
        std::vector<float> row(static_cast<std::size_t>(T));
        for (int h = 0; h < H; ++h) {
            const int ho = h * dk;
            for (int qi = 0; qi < T; ++qi) {
                for (int t = 0; t <= qi; ++t) {
                    float s = 0.0f;
                    const float* qv = lc.q.data() + static_cast<std::size_t>(qi) * d + ho;
                    const float* kv = lc.k.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) s += qv[i] * kv[i];
                    row[static_cast<std::size_t>(t)] = s * scale;
                }
                dcrd::detail::softmax_inplace(row.data(), qi + 1);
                float* arow = lc.att.data() + (static_cast<std::size_t>(h) * T + qi) * T;
                for (int t = 0; t <= qi; ++t) arow[t] = row[static_cast<std::size_t>(t)];
                float* out = lc.att_out.data() + static_cast<std::size_t>(qi) * d + ho;
                for (int t = 0; t <= qi; ++t) {
                    const float w = arow[t];
                    const float* vv = lc.v.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) out[i] += w * vv[i];
                }
            }
        }
        lc.x_mid.resize(static_cast<std::size_t>(T) * d);
        std::vector<float> proj(static_cast<std::size_t>(d));
        for (int t = 0; t < T; ++t) {
            dcrd::detail::affine(lc.att_out.data() + static_cast<std::size_t>(t) * d, lv.wo, lv.bo,
                                 d, d, proj.data());
            for (int i = 0; i < d; ++i)
                lc.x_mid[static_cast<std::size_t>(t) * d + i] =
                    lc.x_in[static_cast<std::size_t>(t) * d + i] + proj[static_cast<std::size_t>(i)];
        }
        lc.a2.resize(static_cast<std::size_t>(T) * d);
        lc.ln2_mu.resize(static_cast<std::size_t>(T));
        lc.ln2_inv.resize(static_cast<std::size_t>(T));
        lc.h_pre.assign(static_cast<std::size_t>(T) * f, 0.0f);
        lc.h_act.assign(static_cast<std::size_t>(T) * f, 0.0f);
        for (int t = 0; t < T; ++t) {
            layer_norm_cached(lc.x_mid.data() + static_cast<std::size_t>(t) * d, lv.ln2_g, lv.ln2_b,
                              d, lc.a2.data() + static_cast<std::size_t>(t) * d,
                              lc.ln2_mu[static_cast<std::size_t>(t)],
                              lc.ln2_inv[static_cast<std::size_t>(t)]);
            dcrd::detail::affine(lc.a2.data() + static_cast<std::size_t>(t) * d, lv.w1, lv.b1, d, f,
                                 lc.h_pre.data() + static_cast<std::size_t>(t) * f);
            for (int i = 0; i < f; ++i)
                lc.h_act[static_cast<std::size_t>(t) * f + i] =
                    dcrd::detail::gelu(lc.h_pre[static_cast<std::size_t>(t) * f + i]);
            dcrd::detail::affine(lc.h_act.data() + static_cast<std::size_t>(t) * f, lv.w2, lv.b2, f,
                                 d, proj.data());
            for (int i = 0; i < d; ++i)
                x[static_cast<std::size_t>(t) * d + i] =
                    lc.x_mid[static_cast<std::size_t>(t) * d + i] + proj[static_cast<std::size_t>(i)];
        }
    }
    c.x_final = x;
    c.af.resize(static_cast<std::size_t>(T) * d);
    c.lnf_mu.resize(static_cast<std::size_t>(T));
    c.lnf_inv.resize(static_cast<std::size_t>(T));
    c.probs.assign(static_cast<std::size_t>(T) * V, 0.0f);
    double loss_sum = 0.0;
    const int n_pred = T - 1;
    for (int t = 0; t < T; ++t) {
        layer_norm_cached(c.x_final.data() + static_cast<std::size_t>(t) * d, pv.ln_f_g, pv.ln_f_b,
                          d, c.af.data() + static_cast<std::size_t>(t) * d,
                          c.lnf_mu[static_cast<std::size_t>(t)], c.lnf_inv[static_cast<std::size_t>(t)]);
        float* p = c.probs.data() + static_cast<std::size_t>(t) * V;
        dcrd::detail::affine(c.af.data() + static_cast<std::size_t>(t) * d, pv.head_w, pv.head_b, d,
                             V, p);
        dcrd::detail::softmax_inplace(p, V);
        if (t < n_pred) {
            const float pt = p[static_cast<std::size_t>(toks[static_cast<std::size_t>(t + 1)])];
            loss_sum += -std::log(std::max(pt, 1e-30f));
        }
    }

    // ---- backward ----
    std::vector<float> dx(static_cast<std::size_t>(T) * d, 0.0f);
    std::vector<float> daf(static_cast<std::size_t>(d));
    std::vector<float> dlogits(static_cast<std::size_t>(V));
    for (int t = 0; t < n_pred; ++t) {
        const float* p = c.probs.data() + static_cast<std::size_t>(t) * V;
        for (int j = 0; j < V; ++j) dlogits[static_cast<std::size_t>(j)] = p[j];
        dlogits[static_cast<std::size_t>(toks[static_cast<std::size_t>(t + 1)])] -= 1.0f;
        std::fill(daf.begin(), daf.end(), 0.0f);
        affine_backward(c.af.data() + static_cast<std::size_t>(t) * d, pv.head_w, dlogits.data(), d,
                        V, daf.data(), gv.head_w, gv.head_b);
        layer_norm_backward(c.x_final.data() + static_cast<std::size_t>(t) * d, pv.ln_f_g,
                            daf.data(), d, c.lnf_mu[static_cast<std::size_t>(t)],
                            c.lnf_inv[static_cast<std::size_t>(t)],
                            dx.data() + static_cast<std::size_t>(t) * d, gv.ln_f_g, gv.ln_f_b);
    }

    std::vector<float> da(static_cast<std::size_t>(d));
    std::vector<float> dh_act(static_cast<std::size_t>(f));
    std::vector<float> dh_pre(static_cast<std::size_t>(f));
    std::vector<float> dmid(static_cast<std::size_t>(T) * d);
    std::vector<float> datt_out(static_cast<std::size_t>(T) * d);
    std::vector<float> dq(static_cast<std::size_t>(T) * d);
    std::vector<float> dkv(static_cast<std::size_t>(T) * d);
    std::vector<float> dvv(static_cast<std::size_t>(T) * d);
    std::vector<float> datt(static_cast<std::size_t>(T));
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        LayerCache& lc = c.layers[static_cast<std::size_t>(l)];
        const LayerView& lv = pv.layers[static_cast<std::size_t>(l)];
        GradView::LayerGrad& lg = gv.layers[static_cast<std::size_t>(l)];
        // FFN block: x = x_mid + W2 gelu(W1 ln2(x_mid))
        std::copy(dx.begin(), dx.end(), dmid.begin());
        for (int t = 0; t < T; ++t) {
            const float* dxt = dx.data() + static_cast<std::size_t>(t) * d;
            std::fill(dh_act.begin(), dh_act.end(), 0.0f);
            affine_backward(lc.h_act.data() + static_cast<std::size_t>(t) * f, lv.w2, dxt, f, d,
                            dh_act.data(), lg.w2, lg.b2);
            for (int i = 0; i < f; ++i)
                dh_pre[static_cast<std::size_t>(i)] =
                    dh_act[static_cast<std::size_t>(i)] *
                    gelu_grad(lc.h_pre[static_cast<std::size_t>(t) * f + i]);
            std::fill(da.begin(), da.end(), 0.0f);
            affine_backward(lc.a2.data() + static_cast<std::size_t>(t) * d, lv.w1, dh_pre.data(), d,
                            f, da.data(), lg.w1, lg.b1);
            layer_norm_backward(lc.x_mid.data() + static_cast<std::size_t>(t) * d, lv.ln2_g,
                                da.data(), d, lc.ln2_mu[static_cast<std::size_t>(t)],
                                lc.ln2_inv[static_cast<std::size_t>(t)],
                                dmid.data() + static_cast<std::size_t>(t) * d, lg.ln2_g, lg.ln2_b);
        }
        // attention block: x_mid = x_in + Wo att_out
        std::copy(dmid.begin(), dmid.end(), dx.begin());  // residual path into x_in
        std::fill(datt_out.begin(), datt_out.end(), 0.0f);
        for (int t = 0; t < T; ++t)
            affine_backward(lc.att_out.data() + static_cast<std::size_t>(t) * d, lv.wo,
                            dmid.data() + static_cast<std::size_t>(t) * d, d, d,
                            datt_out.data() + static_cast<std::size_t>(t) * d, lg.wo, lg.bo);
        std::fill(dq.begin(), dq.end(), 0.0f);
        std::fill(dkv.begin(), dkv.end(), 0.0f);
        std::fill(dvv.begin(), dvv.end(), 0.0f);
        for (int h = 0; h < H; ++h) {
            const int ho = h * dk;
            for (int qi = 0; qi < T; ++qi) {
                const float* arow = lc.att.data() + (static_cast<std::size_t>(h) * T + qi) * T;
                const float* dout = datt_out.data() + static_cast<std::size_t>(qi) * d + ho;
                float dot = 0.0f;
                for (int t = 0; t <= qi; ++t) {
                    float g = 0.0f;
                    const float* vv = lc.v.data() + static_cast<std::size_t>(t) * d + ho;
                    float* dv = dvv.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) {
                        g += dout[i] * vv[i];
                        dv[i] += arow[t] * dout[i];
                    }
                    datt[static_cast<std::size_t>(t)] = g;
                    dot += arow[t] * g;
                }
                const float* qv = lc.q.data() + static_cast<std::size_t>(qi) * d + ho;
                float* dqv = dq.data() + static_cast<std::size_t>(qi) * d + ho;
                for (int t = 0; t <= qi; ++t) {
                    const float ds = arow[t] * (datt[static_cast<std::size_t>(t)] - dot) * scale;
                    const float* kv = lc.k.data() + static_cast<std::size_t>(t) * d + ho;
                    float* dkt = dkv.data() + static_cast<std::size_t>(t) * d + ho;
                    for (int i = 0; i < dk; ++i) {
                        dqv[i] += ds * kv[i];
                        dkt[i] += ds * qv[i];
                    }
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            std::fill(da.begin(), da.end(), 0.0f);
            const float* a = lc.a1.data() + static_cast<std::size_t>(t) * d;
            affine_backward(a, lv.wq, dq.data() + static_cast<std::size_t>(t) * d, d, d, da.data(),
                            lg.wq, lg.bq);
            affine_backward(a, lv.wk, dkv.data() + static_cast<std::size_t>(t) * d, d, d, da.data(),
                            lg.wk, lg.bk);
            affine_backward(a, lv.wv, dvv.data() + static_cast<std::size_t>(t) * d, d, d, da.data(),
                            lg.wv, lg.bv);
            layer_norm_backward(lc.x_in.data() + static_cast<std::size_t>(t) * d, lv.ln1_g,
                                da.data(), d, lc.ln1_mu[static_cast<std::size_t>(t)],
                                lc.ln1_inv[static_cast<std::size_t>(t)],
                                dx.data() + static_cast<std::size_t>(t) * d, lg.ln1_g, lg.ln1_b);
        }
    }
    for (int t = 0; t < T; ++t) {
        const float* dxt = dx.data() + static_cast<std::size_t>(t) * d;
        float* gt = gv.tok_emb + static_cast<std::size_t>(toks[static_cast<std::size_t>(t)]) * d;
        float* gp = gv.pos_emb + static_cast<std::size_t>(t) * d;
        for (int i = 0; i < d; ++i) {
            gt[i] += dxt[i];
            gp[i] += dxt[i];
        }
    }
    return {loss_sum, n_pred};
}

}  // namespace detail

// Mini-batch Adam on next-token cross-entropy. Deterministic given seeds.
inline TrainReport train(ModelParams& params, const std::vector<TokenSeq>& corpus,
                         const TrainConfig& cfg) {
    if (corpus.empty()) throw InputError("empty training corpus");
    for (const auto& s : corpus) {
        if (s.size() < 2) throw InputError("corpus sequence shorter than 2 tokens");
        if (static_cast<int>(s.size()) > params.config.max_seq)
            throw InputError("corpus sequence exceeds max_seq");
        for (TokenId t : s)
            if (t < 0 || t >= params.config.vocab_size) throw InputError("corpus token out of range");
    }
    TrainReport report;
    if (cfg.steps == 0) return report;

    const std::size_t n = params.data.size();
    std::vector<float> grads(n, 0.0f);
    std::vector<float> m(n, 0.0f);
    std::vector<float> v(n, 0.0f);
    Rng rng(derive_seed(cfg.seed, "train-batch"));
    const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;

    report.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grads.begin(), grads.end(), 0.0f);
        ParamView pv = make_view(params);
        detail::GradView gv = detail::make_grad_view(params.config, grads);
        double loss_sum = 0.0;
        int pred_count = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& seq = corpus[static_cast<std::size_t>(rng.uniform_index(corpus.size()))];
            auto [ls, np] = detail::seq_forward_backward(params, pv, gv, seq);
            loss_sum += ls;
            pred_count += np;
        }
        const float loss = static_cast<float>(loss_sum / pred_count);
        if (!std::isfinite(loss))
            throw NumericError("training diverged at step " + std::to_string(step));
        report.loss_curve.push_back(loss);
        if (step == 0) report.initial_loss = loss;
        report.final_loss = loss;

        const float gscale = 1.0f / static_cast<float>(pred_count);
        const float t = static_cast<float>(step + 1);
        const float bc1 = 1.0f - std::pow(beta1, t);
        const float bc2 = 1.0f - std::pow(beta2, t);
        for (std::size_t i = 0; i < n; ++i) {
            const float g = grads[i] * gscale;
            m[i] = beta1 * m[i] + (1.0f - beta1) * g;
            v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            params.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    }
    return report;
}

}  // namespace dcrd
