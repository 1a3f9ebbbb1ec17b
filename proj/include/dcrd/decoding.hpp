#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcrd/common.hpp"
#include "dcrd/fidelity.hpp"
#include "dcrd/model.hpp"
#include "dcrd/predictor.hpp"
#include "dcrd/vocab.hpp"

namespace dcrd {

enum class Strategy { Greedy, Cad, Adacad, Dcd, DcrdRouted };

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "greedy") return Strategy::Greedy;
    if (s == "cad") return Strategy::Cad;
    if (s == "adacad") return Strategy::Adacad;
    if (s == "dcd") return Strategy::Dcd;
    if (s == "dcrd" || s == "dcrd-routed") return Strategy::DcrdRouted;
    throw ConfigError("unknown strategy: " + s);
}

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Greedy: return "greedy";
        case Strategy::Cad: return "cad";
        case Strategy::Adacad: return "adacad";
        case Strategy::Dcd: return "dcd";
        case Strategy::DcrdRouted: return "dcrd-routed";
    }
    return "?";
}

struct DecodeConfig {
    double alpha = 1.0;
    double lambda = 1.0;
    int max_new = 32;
    Strategy strategy = Strategy::DcrdRouted;
    int draft_len = -1;  // -1: use max_new
    bool seed_shat_from_draft = false;
    bool record_trace = true;

    int effective_draft_len() const { return draft_len < 0 ? max_new : draft_len; }

    void validate() const {
        if (alpha < 0.0 || lambda < 0.0) throw ConfigError("alpha and lambda must be >= 0");
        if (max_new < 0) throw ConfigError("max_new must be >= 0");
    }
};

// Assembled with/without-context token sequences plus the with-context span
// layout. The without-context prompt uses the same template with an empty
// context slot.
struct PromptParts {
    TokenSeq with_context;
    TokenSeq without_context;
    SpanLayout layout;  // spans over with_context; output span filled per step

    int prompt_len() const { return static_cast<int>(with_context.size()); }
};

inline PromptParts build_prompt(const Vocab& vocab, const std::string& context,
                                const std::string& question) {
    PromptParts p;
    p.with_context = vocab.tokenize(assemble_prompt_text(context, question));
    p.without_context = vocab.tokenize(assemble_prompt_text("", question));
    const int n_ctx = static_cast<int>(vocab.tokenize(context).size());
    const int n_q = static_cast<int>(vocab.tokenize(question).size());
    // template: ctx | \n Using ... question: \n Question: | q | \n Answer
    const int head = static_cast<int>(template_words().size()) + 1;  // leading \n .. Question:
    p.layout.context = {0, n_ctx};
    p.layout.question = {n_ctx + head, n_ctx + head + n_q};
    p.layout.output = {p.prompt_len(), p.prompt_len()};
    return p;
}

// Eq-style adaptive coefficient: alpha / (1 + lambda * s_hat).
inline double alpha_adjusted(double alpha, double lambda, double s_hat) {
    return alpha / (1.0 + lambda * s_hat);
}

// softmax[(1 + a) * logits_with - a * logits_without], max-subtracted.
inline std::vector<double> contrastive_step(const std::vector<float>& logits_with,
                                            const std::vector<float>& logits_without,
                                            double alpha_adj) {
    if (logits_with.size() != logits_without.size())
        throw InputError("logit vectors differ in size");
    const std::size_t n = logits_with.size();
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(logits_with[i]) || !std::isfinite(logits_without[i]))
            throw NumericError("non-finite logits in contrastive step");
        score[i] = (1.0 + alpha_adj) * logits_with[i] - alpha_adj * logits_without[i];
    }
    double m = score[0];
    for (double s : score) m = std::max(m, s);
    double sum = 0.0;
    for (double& s : score) {
        s = std::exp(s - m);
        sum += s;
    }
    for (double& s : score) s /= sum;
    return score;
}

inline std::vector<double> softmax_double(const std::vector<float>& logits) {
    std::vector<double> p(logits.begin(), logits.end());
    double m = p[0];
    for (double v : p) m = std::max(m, v);
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

// Jensen-Shannon divergence in bits; 0 for identical distributions, 1 for
// disjoint supports.
inline double jensen_shannon_divergence(const std::vector<double>& p,
                                        const std::vector<double>& q) {
    if (p.size() != q.size()) throw InputError("distribution size mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) d += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) d += 0.5 * q[i] * std::log2(q[i] / m);
    }
    return d;
}

struct StepTrace {
    int step = 0;
    std::vector<float> logits_without;
    std::vector<float> logits_with;
    double s_hat = 0.5;
    double alpha_adj = 0.0;
    std::vector<double> p3;
    TokenId chosen = 0;
};

enum class Route { GD, DCD };

struct RoutePrediction {
    double prob_conflict = 0.5;
    bool label = false;
};

struct DecodeResult {
    TokenSeq answer;  // generated tokens, end token excluded
    Route route = Route::DCD;
    std::optional<RoutePrediction> conflict_prediction;
    std::vector<StepTrace> traces;
    TokenSeq draft;  // routed strategies only
    double seconds = 0.0;
};

using PredictFn = std::function<RoutePrediction(const FeatureVec&)>;

namespace detail {

enum class CoeffMode { Constant, Fidelity, Jsd };

inline void check_capacity(const PromptParts& prompt, int max_new, const ModelConfig& cfg) {
    if (prompt.with_context.empty() || prompt.without_context.empty())
        throw InputError("empty prompt");
    if (prompt.prompt_len() + max_new > cfg.max_seq)
        throw InputError("prompt + max_new exceeds max_seq");
}

inline DecodeResult decode_contrastive(const ModelParams& params, const PromptParts& prompt,
                                       const DecodeConfig& config, CoeffMode mode,
                                       std::optional<double> s_hat_seed = std::nullopt) {
    config.validate();
    check_capacity(prompt, config.max_new, params.config);
    const auto t0 = std::chrono::steady_clock::now();

    const bool need_attn = mode == CoeffMode::Fidelity;
    DecoderSession with_sess(params, CaptureFlags{need_attn, false});
    DecoderSession without_sess(params);
    with_sess.feed(prompt.with_context);
    without_sess.feed(prompt.without_context);

    const Vocab vocab_probe;  // end id is fixed by construction
    const TokenId end_id = vocab_probe.end_id();
    DecodeResult result;
    SpanLayout layout = prompt.layout;
    for (int step = 0; step < config.max_new; ++step) {
        const std::vector<float>& lw = with_sess.last_logits();
        const std::vector<float>& lo = without_sess.last_logits();
        double s_hat = 0.5;
        double coeff = config.alpha;
        if (mode == CoeffMode::Fidelity) {
            layout.output = {prompt.prompt_len(),
                             prompt.prompt_len() + static_cast<int>(result.answer.size())};
            if (layout.output.empty()) {
                s_hat = s_hat_seed.value_or(0.5);
            } else {
                s_hat = fidelity_scalar(
                    fidelity_matrix(span_attention_summary(with_sess, layout)));
            }
            coeff = alpha_adjusted(config.alpha, config.lambda, s_hat);
        } else if (mode == CoeffMode::Jsd) {
            coeff = jensen_shannon_divergence(softmax_double(lw), softmax_double(lo));
        }
        std::vector<double> p3 = contrastive_step(lw, lo, coeff);
        TokenId chosen = 0;
        for (int i = 1; i < static_cast<int>(p3.size()); ++i)
            if (p3[static_cast<std::size_t>(i)] > p3[static_cast<std::size_t>(chosen)]) chosen = i;
        if (config.record_trace) {
            StepTrace tr;
            tr.step = step;
            tr.logits_without = lo;
            tr.logits_with = lw;
            tr.s_hat = s_hat;
            tr.alpha_adj = coeff;
            tr.p3 = std::move(p3);
            tr.chosen = chosen;
            result.traces.push_back(std::move(tr));
        }
        if (chosen == end_id) break;
        result.answer.push_back(chosen);
        if (step + 1 < config.max_new) {
            with_sess.feed(chosen);
            without_sess.feed(chosen);
        }
    }
    result.route = Route::DCD;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace detail

inline DecodeResult decode_greedy(const ModelParams& params, const PromptParts& prompt,
                                  const DecodeConfig& config) {
    config.validate();
    detail::check_capacity(prompt, config.max_new, params.config);
    const auto t0 = std::chrono::steady_clock::now();
    const TokenSeq full =
        generate_greedy(params, prompt.with_context, config.max_new, Vocab().end_id());
    DecodeResult r;
    r.answer.assign(full.begin() + prompt.prompt_len(), full.end());
    r.route = Route::GD;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline DecodeResult decode_cad(const ModelParams& params, const PromptParts& prompt,
                               const DecodeConfig& config) {
    return detail::decode_contrastive(params, prompt, config, detail::CoeffMode::Constant);
}

inline DecodeResult decode_adacad(const ModelParams& params, const PromptParts& prompt,
                                  const DecodeConfig& config) {
    return detail::decode_contrastive(params, prompt, config, detail::CoeffMode::Jsd);
}

inline DecodeResult decode_dcd(const ModelParams& params, const PromptParts& prompt,
                               const DecodeConfig& config,
                               std::optional<double> s_hat_seed = std::nullopt) {
    return detail::decode_contrastive(params, prompt, config, detail::CoeffMode::Fidelity,
                                      config.seed_shat_from_draft ? s_hat_seed : std::nullopt);
}

// Greedy draft with attention capture; returns the draft tokens and the
// fidelity features of the draft output span (empty when no tokens emerged).
struct DraftOutcome {
    TokenSeq tokens;
    FeatureVec features;
    double s_hat = 0.5;
};

inline DraftOutcome run_draft(const ModelParams& params, const PromptParts& prompt, int draft_len) {
    if (prompt.prompt_len() + draft_len > params.config.max_seq)
        throw InputError("prompt + draft_len exceeds max_seq");
    DraftOutcome out;
    DecoderSession sess(params, CaptureFlags{true, false});
    sess.feed(prompt.with_context);
    const TokenId end_id = Vocab().end_id();
    for (int step = 0; step < draft_len; ++step) {
        const TokenId next = argmax_token(sess.last_logits());
        if (next == end_id) break;
        // feed before recording so every output position has an attention row
        sess.feed(next);
        out.tokens.push_back(next);
    }
    if (!out.tokens.empty()) {
        SpanLayout layout = prompt.layout;
        layout.output = {prompt.prompt_len(),
                         prompt.prompt_len() + static_cast<int>(out.tokens.size())};
        const FidelityMatrix fm = fidelity_matrix(span_attention_summary(sess, layout));
        out.features = flatten_features(fm);
        out.s_hat = fidelity_scalar(fm);
    }
    return out;
}

// Two-stage routed decode: a greedy draft supplies fidelity features for the
// conflict prediction; non-conflict keeps the draft as the answer, conflict
// discards it and re-decodes with DCD.
inline DecodeResult route_and_decode(const ModelParams& params, const PromptParts& prompt,
                                     const PredictFn& predictor, const DecodeConfig& config) {
    if (!predictor) throw InputError("routed decoding requires a predictor");
    config.validate();
    detail::check_capacity(prompt, config.max_new, params.config);
    const auto t0 = std::chrono::steady_clock::now();
    DraftOutcome draft = run_draft(params, prompt, config.effective_draft_len());
    RoutePrediction pred;
    if (draft.features.empty()) {
        pred.prob_conflict = 0.5;  // no output span to measure; fall through to DCD
        pred.label = true;
    } else {
        pred = predictor(draft.features);
    }
    DecodeResult result;
    if (!pred.label) {
        result.answer = draft.tokens;
        result.route = Route::GD;
    } else {
        result = decode_dcd(params, prompt, config,
                            draft.features.empty() ? std::nullopt
                                                   : std::optional<double>(draft.s_hat));
        result.route = Route::DCD;
    }
    result.conflict_prediction = pred;
    result.draft = std::move(draft.tokens);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// One next-token logits pair without running a whole decode; used by tests
// and traces.
struct LogitsPair {
    std::vector<float> without_context;
    std::vector<float> with_context;
    AttentionTensor attention_with;
};

inline LogitsPair logits_pair(const ModelParams& params, const PromptParts& prompt,
                              const TokenSeq& generated) {
    TokenSeq w = prompt.with_context;
    w.insert(w.end(), generated.begin(), generated.end());
    TokenSeq wo = prompt.without_context;
    wo.insert(wo.end(), generated.begin(), generated.end());
    if (static_cast<int>(w.size()) > params.config.max_seq)
        throw InputError("assembled sequence exceeds max_seq");
    DecoderSession sw(params, CaptureFlags{true, false});
    sw.feed(w);
    DecoderSession so(params);
    so.feed(wo);
    LogitsPair out;
    out.with_context = sw.last_logits();
    out.without_context = so.last_logits();
    out.attention_with = sw.attention_tensor();
    return out;
}

}  // namespace dcrd
