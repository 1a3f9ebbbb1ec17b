// Command-line front end: forge datasets, train the model and the conflict
// predictor, decode single instances, and run evaluations or sweeps.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcrd/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // dotted.path=json-value
};

json parse_override_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);  // bare string
    return v;
}

void apply_override(json& cfg, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw dcrd::ConfigError("--set expects dotted.path=value, got: " + spec);
    const std::string path = spec.substr(0, eq);
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw dcrd::ConfigError("empty key in --set path: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = parse_override_value(spec.substr(eq + 1));
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

dcrd::RunConfig load_config(const GlobalOpts& g) {
    json user = json::object();
    if (!g.config_path.empty()) {
        std::ifstream is(g.config_path);
        if (!is) throw dcrd::ConfigError("cannot open config file: " + g.config_path);
        user = json::parse(is, nullptr, false);
        if (user.is_discarded())
            throw dcrd::ConfigError("config file is not valid JSON: " + g.config_path);
    }
    for (const auto& s : g.overrides) apply_override(user, s);
    return dcrd::RunConfig::from_json(user);
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json meta_block(const dcrd::RunConfig& rc, const dcrd::KnowledgeBase& kb) {
    return {{"master_seed", rc.master_seed()},
            {"config_hash", hex64(rc.config_hash())},
            {"kb_checksum", hex64(kb.checksum())}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw dcrd::InputError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

fs::path artifacts(const dcrd::RunConfig& rc) {
    fs::path dir = rc.artifacts_dir();
    fs::create_directories(dir);
    return dir;
}

std::uint64_t file_checksum(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw dcrd::InputError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
    return dcrd::checksum_bytes(bytes.data(), bytes.size());
}

int cmd_forge(const GlobalOpts& g) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    dcrd::ForgeOutput out = dcrd::run_forge(rc, kb);
    dcrd::write_dataset_jsonl((dir / "dataset.jsonl").string(), out.dataset);
    dcrd::write_corpus((dir / "corpus.txt").string(), out.corpus);
    int conflicts = 0;
    for (const auto& i : out.dataset) conflicts += i.conflict ? 1 : 0;
    json report = {{"meta", meta_block(rc, kb)},
                   {"n_instances", static_cast<int>(out.dataset.size())},
                   {"n_conflict", conflicts},
                   {"accepted", out.stats.accepted},
                   {"rejected", out.stats.rejected},
                   {"retries", out.stats.retries},
                   {"corpus_lines", static_cast<int>(out.corpus.size())},
                   {"vocab_size", kb.vocab().size()},
                   {"dataset_checksum", hex64(file_checksum(dir / "dataset.jsonl"))}};
    write_json(dir / "forge_report.json", report);
    std::cout << "forged " << out.dataset.size() << " instances (" << conflicts
              << " conflict) into " << (dir / "dataset.jsonl").string() << "\n";
    return 0;
}

int cmd_train_model(const GlobalOpts& g) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    const auto lines = dcrd::build_memory_corpus(kb, rc.corpus_options());
    const auto corpus = dcrd::tokenize_corpus(kb.vocab(), lines);
    dcrd::ModelConfig mc = rc.model_config();
    if (kb.vocab().size() > mc.vocab_size)
        throw dcrd::ConfigError("vocab (" + std::to_string(kb.vocab().size()) +
                                " words) exceeds model vocab_size");
    dcrd::ModelParams params = dcrd::init_params(mc);
    dcrd::TrainReport tr = dcrd::train(params, corpus, rc.train_config());
    dcrd::save_model((dir / "model.ckpt").string(), params);
    json report = {{"meta", meta_block(rc, kb)},
                   {"steps", static_cast<int>(tr.loss_curve.size())},
                   {"initial_loss", tr.initial_loss},
                   {"final_loss", tr.final_loss},
                   {"param_checksum", hex64(params.checksum())}};
    write_json(dir / "train_report.json", report);
    std::cout << "trained model: loss " << tr.initial_loss << " -> " << tr.final_loss
              << ", saved " << (dir / "model.ckpt").string() << "\n";
    return 0;
}

int cmd_train_predictor(const GlobalOpts& g) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    dcrd::ModelParams params = dcrd::load_model((dir / "model.ckpt").string());
    auto dataset = dcrd::read_dataset_jsonl((dir / "dataset.jsonl").string(), kb);
    const dcrd::DecodeConfig dc = rc.decode_config();
    dcrd::PredictorDataset data =
        dcrd::collect_predictor_data(dataset, params, kb.vocab(), dc.effective_draft_len());
    dcrd::write_predictor_dataset((dir / "predictor_data.jsonl").string(), data);
    const double hold_frac = rc.json.at("predictor").at("holdout_fraction").get<double>();
    auto [tr_idx, ho_idx] = dcrd::holdout_split(data.features.size(), hold_frac,
                                                dcrd::derive_seed(rc.master_seed(), "predictor"));
    std::vector<dcrd::FeatureVec> trf, hof;
    std::vector<bool> trl, hol;
    for (auto i : tr_idx) { trf.push_back(data.features[i]); trl.push_back(data.labels[i]); }
    for (auto i : ho_idx) { hof.push_back(data.features[i]); hol.push_back(data.labels[i]); }
    float loss = 0.0f;
    dcrd::MlpParams mlp = dcrd::train_predictor(trf, trl, rc.predictor_config(), &loss);
    const double threshold = rc.json.at("predictor").at("threshold").get<double>();
    dcrd::save_predictor((dir / "predictor.ckpt").string(), mlp, threshold);
    json report = {{"meta", meta_block(rc, kb)},
                   {"n_examples", static_cast<int>(data.features.size())},
                   {"n_train", static_cast<int>(trf.size())},
                   {"n_holdout", static_cast<int>(hof.size())},
                   {"final_loss", loss}};
    if (!hof.empty()) {
        dcrd::PredictorReport pr = dcrd::evaluate_predictor(mlp, hof, hol, threshold);
        report["holdout"] = {{"accuracy", pr.accuracy}, {"precision", pr.precision},
                             {"recall", pr.recall},     {"f1", pr.f1},
                             {"tp", pr.tp},             {"tn", pr.tn},
                             {"fp", pr.fp},             {"fn", pr.fn}};
        std::cout << "predictor holdout accuracy " << pr.accuracy << " f1 " << pr.f1 << "\n";
    }
    write_json(dir / "predictor_report.json", report);
    std::cout << "saved " << (dir / "predictor.ckpt").string() << "\n";
    return 0;
}

json trace_to_json(const dcrd::StepTrace& t) {
    return {{"step", t.step},       {"s_hat", t.s_hat}, {"alpha_adj", t.alpha_adj},
            {"chosen", t.chosen},   {"p3", t.p3},       {"logits_with", t.logits_with},
            {"logits_without", t.logits_without}};
}

int cmd_decode(const GlobalOpts& g, int instance, const std::string& strategy, bool trace) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    dcrd::ModelParams params = dcrd::load_model((dir / "model.ckpt").string());
    auto dataset = dcrd::read_dataset_jsonl((dir / "dataset.jsonl").string(), kb);
    if (instance < 0 || instance >= static_cast<int>(dataset.size()))
        throw dcrd::InputError("instance index out of range");
    const dcrd::QAInstance& inst = dataset[static_cast<std::size_t>(instance)];
    dcrd::DecodeConfig dc = rc.decode_config();
    dc.record_trace = trace;
    dcrd::Strategy strat = strategy.empty() ? dc.strategy : dcrd::strategy_from_string(strategy);
    dcrd::PredictFn predict_fn;
    if (strat == dcrd::Strategy::DcrdRouted) {
        dcrd::LoadedPredictor lp = dcrd::load_predictor((dir / "predictor.ckpt").string());
        predict_fn = dcrd::make_mlp_predict_fn(lp.params, lp.threshold);
    }
    dcrd::DecodeResult r =
        dcrd::decode_instance(params, kb.vocab(), inst, strat, dc, predict_fn);
    json out = {{"id", inst.id},
                {"question", inst.question},
                {"context", inst.context},
                {"gold", inst.answer},
                {"conflict", inst.conflict},
                {"strategy", dcrd::strategy_name(strat)},
                {"answer", kb.vocab().detokenize(r.answer)},
                {"route", r.route == dcrd::Route::GD ? "gd" : "dcd"},
                {"seconds", r.seconds}};
    if (r.conflict_prediction)
        out["conflict_prediction"] = {{"prob", r.conflict_prediction->prob_conflict},
                                      {"label", r.conflict_prediction->label}};
    if (trace) {
        json steps = json::array();
        for (const auto& t : r.traces) steps.push_back(trace_to_json(t));
        out["trace"] = steps;
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    dcrd::ModelParams params = dcrd::load_model((dir / "model.ckpt").string());
    auto dataset = dcrd::read_dataset_jsonl((dir / "dataset.jsonl").string(), kb);
    dcrd::LoadedPredictor lp = dcrd::load_predictor((dir / "predictor.ckpt").string());
    dcrd::PredictFn predict_fn = dcrd::make_mlp_predict_fn(lp.params, lp.threshold);
    const dcrd::DecodeConfig dc = rc.decode_config();
    json reports = json::array();
    for (const auto& name : rc.json.at("eval").at("strategies")) {
        const dcrd::Strategy s = dcrd::strategy_from_string(name.get<std::string>());
        dcrd::EvalReport r = dcrd::evaluate(dataset, s, params, kb.vocab(), dc, predict_fn);
        std::cout << r.strategy << ": overall " << r.overall_acc() << " conflict "
                  << r.conflict_acc() << " nonconflict " << r.nonconflict_acc() << " mean_s "
                  << r.mean_seconds << "\n";
        reports.push_back(dcrd::report_to_json(r));
    }
    json out = {{"meta", meta_block(rc, kb)},
                {"dataset_checksum", hex64(file_checksum(dir / "dataset.jsonl"))},
                {"reports", reports}};
    write_json(dir / "eval_report.json", out);
    std::cout << "wrote " << (dir / "eval_report.json").string() << "\n";
    return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& axis, const std::vector<double>& values) {
    dcrd::RunConfig rc = load_config(g);
    const fs::path dir = artifacts(rc);
    dcrd::KnowledgeBase kb = dcrd::build_kb(rc.kb_spec());
    dcrd::ModelParams params = dcrd::load_model((dir / "model.ckpt").string());
    auto dataset = dcrd::read_dataset_jsonl((dir / "dataset.jsonl").string(), kb);
    dcrd::LoadedPredictor lp = dcrd::load_predictor((dir / "predictor.ckpt").string());
    dcrd::PredictFn predict_fn = dcrd::make_mlp_predict_fn(lp.params, lp.threshold);
    std::vector<dcrd::Strategy> strategies;
    for (const auto& name : rc.json.at("eval").at("strategies"))
        strategies.push_back(dcrd::strategy_from_string(name.get<std::string>()));
    const int sweep_n = rc.json.at("eval").at("sweep_instances").get<int>();
    const int n_distr = rc.json.at("forge").at("n_distractors").get<int>();
    dcrd::SweepResult sr =
        dcrd::sweep(kb, dataset, axis, values, strategies, params, rc.decode_config(),
                    predict_fn, sweep_n, n_distr, dcrd::derive_seed(rc.master_seed(), "sweep"));
    const fs::path csv = dir / ("sweep_" + axis + ".csv");
    std::ofstream os(csv);
    if (!os) throw dcrd::InputError("cannot write " + csv.string());
    os << sr.to_csv();
    std::cout << "wrote " << csv.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conflict-aware contrastive decoding toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file (merged over defaults)");
    app.add_option("--set", g.overrides,
                   "config override as dotted.path=value (repeatable), e.g. "
                   "--set seeds.master=42");

    app.add_subcommand("forge", "synthesize the QA dataset and memory corpus");
    app.add_subcommand("train-model", "train the language model on the memory corpus");
    app.add_subcommand("train-predictor", "collect features and train the conflict predictor");

    auto* dec = app.add_subcommand("decode", "decode one dataset instance");
    int instance = 0;
    std::string strategy;
    bool trace = false;
    dec->add_option("--instance", instance, "dataset row index")->required();
    dec->add_option("--strategy", strategy, "greedy|cad|adacad|dcd|dcrd-routed");
    dec->add_flag("--trace", trace, "emit per-step decoding trace");

    app.add_subcommand("eval", "evaluate all configured strategies on the dataset");

    auto* sw = app.add_subcommand("sweep", "sweep one axis and emit CSV");
    std::string axis;
    std::vector<double> values;
    sw->add_option("--axis", axis, "conflict_ratio|alpha|lambda|noise_ratio")->required();
    sw->add_option("--values", values, "axis values")->required()->expected(-1);

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("forge")) return cmd_forge(g);
        if (app.got_subcommand("train-model")) return cmd_train_model(g);
        if (app.got_subcommand("train-predictor")) return cmd_train_predictor(g);
        if (app.got_subcommand("decode")) return cmd_decode(g, instance, strategy, trace);
        if (app.got_subcommand("eval")) return cmd_eval(g);
        if (app.got_subcommand("sweep")) return cmd_sweep(g, axis, values);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const dcrd::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}
