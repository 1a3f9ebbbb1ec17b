#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dcrd/decoding.hpp"

using namespace dcrd;

namespace {

ModelConfig small_config(std::uint64_t seed = 13) {
    ModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq = 64;
    cfg.seed = seed;
    return cfg;
}

Vocab test_vocab() {
    Vocab v;
    v.add("\n");
    for (const auto& w : template_words()) v.add(w);
    for (const char* w : {"alpha", "beta", "gamma", "delta", "what", "is", "x", "?", "."})
        v.add(w);
    return v;
}

PredictFn const_predictor(bool label, double prob) {
    return [label, prob](const FeatureVec&) { return RoutePrediction{prob, label}; };
}

}  // namespace

TEST_CASE("alpha_adjusted matches exact rationals and its bounds") {
    REQUIRE(alpha_adjusted(1.0, 1.0, 0.5) == Catch::Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(alpha_adjusted(1.0, 1.0, 0.0) == 1.0);
    REQUIRE(alpha_adjusted(1.0, 1.0, 1.0) == 0.5);
    REQUIRE(alpha_adjusted(2.0, 3.0, 0.25) == Catch::Approx(2.0 / 1.75).margin(1e-12));
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(0.0, 3.0);
        const double l = rng.uniform(0.0, 3.0);
        const double s = rng.uniform();
        const double adj = alpha_adjusted(a, l, s);
        REQUIRE(adj >= a / (1.0 + l) - 1e-12);
        REQUIRE(adj <= a + 1e-12);
    }
}

TEST_CASE("contrastive_step matches hand-computed softmax") {
    const std::vector<float> lw = {1.0f, 2.0f};
    const std::vector<float> lo = {2.0f, 1.0f};
    // scores = 2*lw - lo = {0, 3}
    const std::vector<double> p = contrastive_step(lw, lo, 1.0);
    REQUIRE(p[0] == Catch::Approx(0.04742587317756678).margin(1e-9));
    REQUIRE(p[1] == Catch::Approx(0.9525741268224333).margin(1e-9));
    REQUIRE(p[0] + p[1] == Catch::Approx(1.0).margin(1e-12));

    // zero coefficient degenerates to softmax of the with-context logits
    const std::vector<double> q = contrastive_step(lw, lo, 0.0);
    const std::vector<double> sw = softmax_double(lw);
    REQUIRE(q[0] == Catch::Approx(sw[0]).margin(1e-12));
    REQUIRE(q[1] == Catch::Approx(sw[1]).margin(1e-12));

    REQUIRE_THROWS_AS(contrastive_step({1.0f}, {1.0f, 2.0f}, 1.0), InputError);
    REQUIRE_THROWS_AS(
        contrastive_step({std::numeric_limits<float>::infinity()}, {0.0f}, 1.0), NumericError);
}

TEST_CASE("jensen-shannon divergence endpoints and a pinned interior value") {
    REQUIRE(jensen_shannon_divergence({0.3, 0.7}, {0.3, 0.7}) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(jensen_shannon_divergence({1.0, 0.0}, {0.0, 1.0}) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(jensen_shannon_divergence({0.5, 0.5}, {0.9, 0.1}) ==
            Catch::Approx(0.1467931024360521).margin(1e-12));
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> p(6), q(6);
        double sp = 0.0, sq = 0.0;
        for (int j = 0; j < 6; ++j) {
            p[static_cast<std::size_t>(j)] = rng.uniform();
            q[static_cast<std::size_t>(j)] = rng.uniform();
            sp += p[static_cast<std::size_t>(j)];
            sq += q[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < 6; ++j) {
            p[static_cast<std::size_t>(j)] /= sp;
            q[static_cast<std::size_t>(j)] /= sq;
        }
        const double d = jensen_shannon_divergence(p, q);
        REQUIRE(d >= 0.0);
        REQUIRE(d <= 1.0);
    }
}

TEST_CASE("build_prompt spans line up with the tokenized template") {
    const Vocab v = test_vocab();
    const std::string context = "alpha beta gamma .";
    const std::string question = "what is x ?";
    const PromptParts p = build_prompt(v, context, question);

    const TokenSeq ctx = v.tokenize(context);
    const TokenSeq q = v.tokenize(question);
    REQUIRE(p.layout.context.begin == 0);
    REQUIRE(p.layout.context.length() == static_cast<int>(ctx.size()));
    REQUIRE(p.layout.question.length() == static_cast<int>(q.size()));
    for (int i = 0; i < p.layout.context.length(); ++i)
        REQUIRE(p.with_context[static_cast<std::size_t>(i)] == ctx[static_cast<std::size_t>(i)]);
    for (int i = 0; i < p.layout.question.length(); ++i)
        REQUIRE(p.with_context[static_cast<std::size_t>(p.layout.question.begin + i)] ==
                q[static_cast<std::size_t>(i)]);
    REQUIRE(p.layout.output.begin == p.prompt_len());
    REQUIRE(p.layout.output.empty());
    // without-context prompt is the same template with an empty slot
    REQUIRE(static_cast<int>(p.without_context.size()) ==
            p.prompt_len() - static_cast<int>(ctx.size()));
    // no <unk> tokens appear anywhere
    for (TokenId t : p.with_context) REQUIRE(t != v.unk_id());
}

TEST_CASE("dcd with lambda 0 reduces to cad") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma .", "what is x ?");
    DecodeConfig cfg;
    cfg.alpha = 1.0;
    cfg.lambda = 0.0;
    cfg.max_new = 8;
    const DecodeResult dcd = decode_dcd(params, prompt, cfg);
    const DecodeResult cad = decode_cad(params, prompt, cfg);
    REQUIRE(dcd.answer == cad.answer);
    for (std::size_t i = 0; i < dcd.traces.size(); ++i) {
        REQUIRE(dcd.traces[i].alpha_adj == Catch::Approx(1.0));
        REQUIRE(dcd.traces[i].p3 == cad.traces[i].p3);
    }
}

TEST_CASE("cad with alpha 0 reduces to greedy decoding") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma .", "what is x ?");
    DecodeConfig cfg;
    cfg.alpha = 0.0;
    cfg.max_new = 8;
    const DecodeResult cad = decode_cad(params, prompt, cfg);
    const DecodeResult greedy = decode_greedy(params, prompt, cfg);
    REQUIRE(cad.answer == greedy.answer);
}

TEST_CASE("adacad reduces to greedy when the context slot is empty") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "", "what is x ?");
    REQUIRE(prompt.with_context == prompt.without_context);
    DecodeConfig cfg;
    cfg.max_new = 8;
    const DecodeResult ada = decode_adacad(params, prompt, cfg);
    const DecodeResult greedy = decode_greedy(params, prompt, cfg);
    REQUIRE(ada.answer == greedy.answer);
    for (const auto& t : ada.traces) REQUIRE(t.alpha_adj == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("dcd traces keep every step inside the coefficient bounds") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma delta .", "what is x ?");
    DecodeConfig cfg;
    cfg.alpha = 1.5;
    cfg.lambda = 2.0;
    cfg.max_new = 8;
    const DecodeResult r = decode_dcd(params, prompt, cfg);
    REQUIRE_FALSE(r.traces.empty());
    REQUIRE(r.traces.front().s_hat == 0.5);  // no output span yet
    for (const auto& t : r.traces) {
        REQUIRE(t.s_hat >= 0.0);
        REQUIRE(t.s_hat <= 1.0);
        REQUIRE(t.alpha_adj >= cfg.alpha / (1.0 + cfg.lambda) - 1e-12);
        REQUIRE(t.alpha_adj <= cfg.alpha + 1e-12);
        double sum = 0.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < t.p3.size(); ++i) {
            sum += t.p3[i];
            if (t.p3[i] > t.p3[arg]) arg = i;
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(static_cast<TokenId>(arg) == t.chosen);
        REQUIRE(t.logits_with.size() == t.logits_without.size());
    }
    // record_trace off produces the same answer with no traces
    DecodeConfig quiet = cfg;
    quiet.record_trace = false;
    const DecodeResult r2 = decode_dcd(params, prompt, quiet);
    REQUIRE(r2.answer == r.answer);
    REQUIRE(r2.traces.empty());
}

TEST_CASE("routing keeps the draft on non-conflict and re-decodes on conflict") {
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma .", "what is x ?");
    DecodeConfig cfg;
    cfg.max_new = 8;

    // pick an init whose greedy draft emits at least one token; an empty
    // draft would legitimately force the DCD route regardless of prediction
    ModelParams params = init_params(small_config());
    DraftOutcome draft = run_draft(params, prompt, cfg.effective_draft_len());
    for (std::uint64_t seed = 100; draft.tokens.empty() && seed < 120; ++seed) {
        params = init_params(small_config(seed));
        draft = run_draft(params, prompt, cfg.effective_draft_len());
    }
    REQUIRE_FALSE(draft.tokens.empty());

    const DecodeResult gd = route_and_decode(params, prompt, const_predictor(false, 0.1), cfg);
    REQUIRE(gd.route == Route::GD);
    REQUIRE(gd.answer == draft.tokens);
    REQUIRE(gd.draft == draft.tokens);
    REQUIRE(gd.conflict_prediction.has_value());
    REQUIRE_FALSE(gd.conflict_prediction->label);
    REQUIRE(gd.conflict_prediction->prob_conflict == Catch::Approx(0.1));

    const DecodeResult dcd = route_and_decode(params, prompt, const_predictor(true, 0.9), cfg);
    REQUIRE(dcd.route == Route::DCD);
    REQUIRE(dcd.conflict_prediction->label);
    const DecodeResult plain = decode_dcd(params, prompt, cfg);
    REQUIRE(dcd.answer == plain.answer);

    REQUIRE_THROWS_AS(route_and_decode(params, prompt, nullptr, cfg), InputError);
}

TEST_CASE("an empty draft bypasses the predictor and falls through to dcd") {
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma .", "what is x ?");
    DecodeConfig cfg;
    cfg.max_new = 8;
    ModelParams params = init_params(small_config());
    DraftOutcome draft = run_draft(params, prompt, cfg.effective_draft_len());
    for (std::uint64_t seed = 200; !draft.tokens.empty() && seed < 240; ++seed) {
        params = init_params(small_config(seed));
        draft = run_draft(params, prompt, cfg.effective_draft_len());
    }
    if (draft.tokens.empty()) {
        // even a "never conflict" predictor cannot claim the empty draft
        const DecodeResult r = route_and_decode(params, prompt, const_predictor(false, 0.0), cfg);
        REQUIRE(r.route == Route::DCD);
        REQUIRE(r.conflict_prediction->label);
        REQUIRE(r.conflict_prediction->prob_conflict == Catch::Approx(0.5));
    }
}

TEST_CASE("greedy draft equals the greedy decode") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma .", "what is x ?");
    DecodeConfig cfg;
    cfg.max_new = 8;
    const DraftOutcome draft = run_draft(params, prompt, cfg.max_new);
    const DecodeResult greedy = decode_greedy(params, prompt, cfg);
    REQUIRE(draft.tokens == greedy.answer);
    if (!draft.tokens.empty()) {
        REQUIRE(static_cast<int>(draft.features.size()) ==
                params.config.n_layers * params.config.n_heads);
        REQUIRE(draft.s_hat >= 0.0);
        REQUIRE(draft.s_hat <= 1.0);
    }
}

TEST_CASE("decoding is deterministic across repeated calls") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta gamma delta .", "what is x ?");
    DecodeConfig cfg;
    cfg.max_new = 10;
    for (auto decode : {decode_cad, decode_adacad}) {
        const DecodeResult a = decode(params, prompt, cfg);
        const DecodeResult b = decode(params, prompt, cfg);
        REQUIRE(a.answer == b.answer);
    }
    const DecodeResult a = decode_dcd(params, prompt, cfg);
    const DecodeResult b = decode_dcd(params, prompt, cfg);
    REQUIRE(a.answer == b.answer);
}

TEST_CASE("decode config validation and capacity checks") {
    const ModelParams params = init_params(small_config());
    const Vocab v = test_vocab();
    const PromptParts prompt = build_prompt(v, "alpha beta .", "what is x ?");
    DecodeConfig bad;
    bad.alpha = -1.0;
    REQUIRE_THROWS_AS(decode_cad(params, prompt, bad), ConfigError);
    DecodeConfig huge;
    huge.max_new = 1000;
    REQUIRE_THROWS_AS(decode_dcd(params, prompt, huge), InputError);
    DecodeConfig zero;
    zero.max_new = 0;
    REQUIRE(decode_cad(params, prompt, zero).answer.empty());
    REQUIRE_THROWS_AS(strategy_from_string("bogus"), ConfigError);
    REQUIRE(strategy_from_string("dcrd") == Strategy::DcrdRouted);
}
