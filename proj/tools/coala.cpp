// coala: extract -> dataset -> phase1 -> phase2 -> score, plus synthetic data and the oracle battery.

#include "coala/coala.hpp"
#include "coala/model_io.hpp"
#include "coala/oracle_battery.hpp"
#include "coala/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#ifndef COALA_BUILD_HASH
#define COALA_BUILD_HASH "unknown"
#endif

namespace {

using namespace coala;
using nlohmann::json;

// Digests of everything a command read and wrote, plus its effective configuration.
class RunManifest {
public:
    RunManifest(std::string command, json config)
        : command_(std::move(command)), config_(std::move(config)), start_(std::chrono::steady_clock::now()) {}

    void input(const fs::path& p) { inputs_[p.string()] = sha256_file(p); }
    void output(const fs::path& p) { outputs_[p.filename().string()] = sha256_file(p); }

    void write(const fs::path& dir) const {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const json j = {{"command", command_}, {"version", COALA_BUILD_HASH}, {"config", config_},
                        {"inputs", inputs_},   {"outputs", outputs_},         {"wall_clock_seconds", wall}};
        write_file(dir / "run_manifest.json", j.dump(2) + "\n");
    }

private:
    std::string command_;
    json config_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector load_labels(const fs::path& path) {
    const FeatureMatrix fm = load_features(path);
    require(fm.d() == 1, "labels '" + path.string() + "' must be an n x 1 matrix");
    return fm.values.col(0);
}

void save_labels(const fs::path& path, const Vector& y) {
    save_features(path, FeatureMatrix{RowMatrix(y), std::nullopt});
}

template <typename Write>
void write_text(const fs::path& path, Write&& body) {
    std::ostringstream os;
    body(os);
    write_file(path, os.str());
}

// Typed snapshot of every option of a subcommand: flag value if given, else config/default.
json effective_config(const CLI::App& sub) {
    json out = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
        const std::string name = opt->get_lnames().front();
        if (opt->get_expected_max() == 0) {
            const std::string d = opt->get_default_str();
            out[name] = opt->count() > 0 || d == "true" || d == "1";
            continue;
        }
        std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
        json parsed = json::parse(value, nullptr, false);
        out[name] = parsed.is_discarded() || parsed.is_object() || parsed.is_array() ? json(value) : parsed;
    }
    return out;
}

// Config file values become option defaults, so explicit flags still win.
void apply_config(CLI::App& app, const json& cfg) {
    require(cfg.is_object(), "config: top level must be an object keyed by subcommand");
    for (const auto& [sub_name, values] : cfg.items()) {
        CLI::App* sub = nullptr;
        try {
            sub = app.get_subcommand(sub_name);
        } catch (const CLI::OptionNotFound&) {
            throw InputError("config: unknown subcommand '" + sub_name + "'");
        }
        require(values.is_object(), "config: '" + sub_name + "' must be an object");
        for (const auto& [key, value] : values.items()) {
            std::string lname = key;
            std::replace(lname.begin(), lname.end(), '_', '-');
            CLI::Option* opt = sub->get_option_no_throw("--" + lname);
            require(opt != nullptr, "config: unknown key '" + sub_name + "." + key + "'");
            opt->default_val(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
}

std::optional<std::string> prescan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
    std::string input;
    std::string out_dir;
    double split = 0.9;
    std::uint64_t seed = 0;
    std::string format = "plain";
};

int cmd_extract(const ExtractArgs& a, const json& config) {
    RunManifest manifest("extract", config);
    std::ifstream in(a.input, std::ios::binary);
    require(static_cast<bool>(in), "cannot open '" + a.input + "'");
    manifest.input(a.input);

    std::vector<PreferenceTriplet> triplets;
    const TurnFormatter format = a.format == "chatml" ? TurnFormatter(chatml_turn) : TurnFormatter(plain_turn);
    const CorpusStats stats = extract_corpus(in, [&](PreferenceTriplet&& t) { triplets.push_back(std::move(t)); }, format);
    const auto split = split_train_eval(std::move(triplets), a.split, derive_seed(a.seed, "split"));

    const fs::path dir = a.out_dir;
    const auto write_jsonl = [&](const std::string& name, const std::vector<PreferenceTriplet>& items) {
        write_text(dir / name, [&](std::ostream& os) {
            for (const auto& t : items) os << to_json(t).dump() << '\n';
        });
        manifest.output(dir / name);
    };
    write_jsonl("train.jsonl", split.train);
    write_jsonl("eval.jsonl", split.eval);
    json s = to_json(stats);
    s["train"] = split.train.size();
    s["eval"] = split.eval.size();
    write_file(dir / "stats.json", s.dump(2) + "\n");
    manifest.output(dir / "stats.json");
    manifest.write(dir);
    std::cout << stats.conversations << " conversations, " << stats.triplets << " triplets (" << split.train.size()
              << " train / " << split.eval.size() << " eval), " << stats.skipped_records << " skipped\n";
    return 0;
}

// ---------------------------------------------------------------- dataset

struct DatasetArgs {
    std::string triplets, chosen, rejected, out_dir;
};

int cmd_dataset(const DatasetArgs& a, const json& config) {
    RunManifest manifest("dataset", config);
    std::vector<PreferenceTriplet> triplets;
    {
        std::ifstream in(a.triplets, std::ios::binary);
        require(static_cast<bool>(in), "cannot open '" + a.triplets + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const json j = json::parse(line, nullptr, false);
            require(!j.is_discarded(), a.triplets + ": line " + std::to_string(lineno) + " is not valid JSON");
            triplets.push_back(triplet_from_json(j));
        }
    }
    for (const auto& p : {a.triplets, a.chosen, a.rejected}) manifest.input(p);
    const auto ds = build_classifier_dataset(triplets, load_features(a.chosen), load_features(a.rejected));

    const fs::path dir = a.out_dir;
    save_features(dir / "features.json", ds.x);
    save_labels(dir / "labels.json", ds.y);
    for (const auto& name : {"features.json", "features.bin", "labels.json", "labels.bin"}) manifest.output(dir / name);
    manifest.write(dir);
    std::cout << ds.y.size() << " rows from " << triplets.size() << " triplets\n";
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out_dir;
    Eigen::Index n = 200, d = 8, hidden = 4;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, const json& config) {
    require(a.n >= 1 && a.d >= 1 && a.hidden >= 1, "synth: n, d and hidden must be >= 1");
    RunManifest manifest("synth", config);
    const auto data = synthetic::planted(a.n, a.d, a.hidden, derive_seed(a.seed, "synth"));
    const fs::path dir = a.out_dir;
    save_features(dir / "features.json", FeatureMatrix{data.x, std::nullopt});
    save_labels(dir / "labels.json", data.labels);
    for (const auto& name : {"features.json", "features.bin", "labels.json", "labels.bin"}) manifest.output(dir / name);
    manifest.write(dir);
    std::cout << a.n << " x " << a.d << " planted dataset, " << (data.labels.array() > 0).count() << " positive\n";
    return 0;
}

// ---------------------------------------------------------------- phase1

struct Phase1Args {
    std::string features, labels, out_dir;
    std::string recover = "final";
    std::string preconditioner = "jacobi";
    double gamma_alpha = 0.0;  // 0: use rho
    bool no_standardize = false;
    Phase1Options opt;
};

int cmd_phase1(Phase1Args a, const json& config) {
    RunManifest manifest("phase1", config);
    const FeatureMatrix fm = load_features(a.features);
    const Vector y = load_labels(a.labels);
    manifest.input(a.features);
    manifest.input(a.labels);

    a.opt.standardize = !a.no_standardize;
    a.opt.recover_from = a.recover == "ergodic" ? RecoverFrom::ergodic : RecoverFrom::final_iterate;
    a.opt.admm.preconditioner =
        a.preconditioner == "block-jacobi" ? Preconditioner::block_jacobi : Preconditioner::jacobi;
    if (a.gamma_alpha > 0.0) a.opt.admm.gamma_alpha = a.gamma_alpha;
    const Phase1Result r = run_phase1(fm.values, y, a.opt);

    const fs::path dir = a.out_dir;
    StoredModel model{{r.net, 1.0, 0.5}, r.standardizer, false};
    for (const auto& p : save_model(dir / "network.json", model)) manifest.output(p);
    write_file(dir / "patterns.json", to_json(r.patterns).dump(2) + "\n");
    const auto& sol = r.solution;
    const json solution = {{"u_final", vector_json(sol.u_final)},     {"v_final", vector_json(sol.v_final)},
                           {"s_final", vector_json(sol.s_final)},     {"u_ergodic", vector_json(sol.u_ergodic)},
                           {"v_ergodic", vector_json(sol.v_ergodic)}, {"s_ergodic", vector_json(sol.s_ergodic)}};
    write_file(dir / "solution.json", solution.dump() + "\n");
    write_text(dir / "admm_trace.csv", [&](std::ostream& os) { write_trace_csv(os, sol.trace); });
    const json metrics = {{"accuracy", r.accuracy},
                          {"objective", sol.final_objective()},
                          {"iterations", sol.iterations},
                          {"converged", sol.converged},
                          {"num_patterns", r.patterns.size()},
                          {"width", r.net.width()},
                          {"cone_violations", r.cone_violations}};
    write_file(dir / "phase1_metrics.json", metrics.dump(2) + "\n");
    for (const auto& name : {"patterns.json", "solution.json", "admm_trace.csv", "phase1_metrics.json"})
        manifest.output(dir / name);
    manifest.write(dir);
    std::cout << "phase1: " << sol.iterations << " iterations, objective " << sol.final_objective() << ", width "
              << r.net.width() << ", accuracy " << r.accuracy << '\n';
    return 0;
}

// ---------------------------------------------------------------- phase2

struct Phase2Args {
    std::string network, features, labels, out_dir;
    std::string optimizer = "agd";
    Phase2Options opt;
};

int cmd_phase2(Phase2Args a, const json& config) {
    RunManifest manifest("phase2", config);
    const StoredModel model = load_model(a.network);
    manifest.input(a.network);
    manifest.input(theta1_path_for(a.network));
    const FeatureMatrix fm = load_features(a.features);
    const Vector y = load_labels(a.labels);
    manifest.input(a.features);
    manifest.input(a.labels);
    require(fm.d() == model.head.net.input_dim(), "phase2: feature dimension must equal the network input dimension");

    a.opt.optimizer = a.optimizer == "adam" ? Optimizer::adam : Optimizer::agd;
    const RowMatrix x = model_inputs(model, fm.values);
    const Phase2Result r = run_phase2(model.head.net, x, y, a.opt);

    const fs::path dir = a.out_dir;
    for (const auto& p : save_model(dir / "head.json", StoredModel{r.head, model.standardizer, true})) manifest.output(p);
    write_text(dir / "agd_trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace); });
    const json metrics = {{"initial_loss", r.initial_loss},
                          {"final_loss", r.final_loss},
                          {"iterations", a.opt.iters},
                          {"step", r.trace.step},
                          {"accuracy", sign_accuracy(r.head.net, x, y)}};
    write_file(dir / "phase2_metrics.json", metrics.dump(2) + "\n");
    manifest.output(dir / "agd_trace.csv");
    manifest.output(dir / "phase2_metrics.json");
    manifest.write(dir);
    std::cout << "phase2: loss " << r.initial_loss << " -> " << r.final_loss << '\n';
    return 0;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
    std::string head, candidates, probs, out_dir;
    std::size_t step = 0;
    GuidanceConfig cfg;
};

int cmd_score(const ScoreArgs& a, const json& config) {
    a.cfg.validate();
    RunManifest manifest("score", config);
    const StoredModel model = load_model(a.head);
    manifest.input(a.head);
    manifest.input(theta1_path_for(a.head));
    const FeatureMatrix fm = load_features(a.candidates);
    manifest.input(a.candidates);
    manifest.input(a.probs);

    json pj;
    try {
        pj = json::parse(read_file(a.probs));
    } catch (const json::exception& e) {
        throw InputError("probs '" + a.probs + "': " + e.what());
    }
    if (pj.is_object()) pj = pj.at("probs");
    const auto raw = pj.get<std::vector<double>>();
    require(static_cast<Eigen::Index>(raw.size()) == fm.n(), "score: probability count must equal candidate rows");
    const Vector probs = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));

    CandidateBatch batch = nucleus_filter(probs, a.cfg.top_p, a.cfg.top_k, a.cfg.num_candidates);
    batch.step_index = a.step;
    const RowMatrix inputs = model_inputs(model, fm.values);
    batch.features.resize(static_cast<Eigen::Index>(batch.indices.size()), inputs.cols());
    for (std::size_t i = 0; i < batch.indices.size(); ++i)
        batch.features.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(batch.indices[i]));
    const GuidedChoice choice = guide(model.head, batch, a.cfg);

    const json out = {{"indices", batch.indices},
                      {"base_probs", vector_json(batch.base_probs)},
                      {"scores", vector_json(choice.scores)},
                      {"normalized", vector_json(choice.normalized)},
                      {"distribution", vector_json(choice.distribution)},
                      {"selected", choice.selected},
                      {"selected_index", batch.indices[choice.selected]},
                      {"applied", a.step % static_cast<std::size_t>(a.cfg.every_n) == 0},
                      {"step", a.step}};
    const fs::path dir = a.out_dir;
    write_file(dir / "score.json", out.dump(2) + "\n");
    manifest.output(dir / "score.json");
    manifest.write(dir);
    std::cout << out.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------- oracle

struct OracleArgs {
    std::string suite = "standard";
    std::string out_dir;
    std::uint64_t seed = 0;
};

int cmd_oracle(const OracleArgs& a, const json& config) {
    require(a.suite == "standard", "oracle: unknown suite '" + a.suite + "'");
    RunManifest manifest("oracle", config);
    oracle::BatteryOptions opt;
    opt.seed = a.seed;
    const auto result = oracle::run_standard_battery(opt);

    std::cout << std::left << std::setw(24) << "check" << std::setw(10) << "relation" << std::setw(14) << "oracle"
              << std::setw(14) << "target" << std::setw(12) << "tolerance" << "result\n";
    for (const auto& r : result.checks) {
        std::cout << std::setw(24) << r.name << std::setw(10) << oracle::relation_name(r.relation) << std::setprecision(6)
                  << std::setw(14) << r.oracle_value << std::setw(14) << r.target_value << std::setw(12) << r.tolerance
                  << (r.passed() ? "PASS" : "FAIL") << '\n';
    }
    std::cout << (result.passed() ? "all checks passed\n" : "battery FAILED\n");
    if (!a.out_dir.empty()) {
        const fs::path dir = a.out_dir;
        write_file(dir / "oracle_report.json", oracle::to_json(result).dump(2) + "\n");
        manifest.output(dir / "oracle_report.json");
        manifest.write(dir);
    }
    if (!result.passed()) throw VerificationError("oracle battery failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convex two-layer preference heads: extraction, training, fine-tuning and guided scoring"};
    app.set_version_flag("--version", std::string(COALA_BUILD_HASH));
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    std::string config_path;
    app.add_option("--config", config_path, "JSON file of per-subcommand option defaults");

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "Extract preference triplets from a JSONL conversation corpus");
    extract->add_option("--input", ex.input, "Conversations, one JSON object per line")->required();
    extract->add_option("--out-dir", ex.out_dir, "Output directory")->required();
    extract->add_option("--split", ex.split, "Train fraction")->check(CLI::Range(0.0, 1.0));
    extract->add_option("--seed", ex.seed, "Root seed");
    extract->add_option("--format", ex.format, "Prompt rendering")->check(CLI::IsMember({"plain", "chatml"}));

    DatasetArgs ds;
    auto* dataset = app.add_subcommand("dataset", "Pair triplets with chosen/rejected embeddings");
    dataset->add_option("--triplets", ds.triplets, "Triplet JSONL")->required();
    dataset->add_option("--chosen", ds.chosen, "Chosen-response feature manifest")->required();
    dataset->add_option("--rejected", ds.rejected, "Rejected-response feature manifest")->required();
    dataset->add_option("--out-dir", ds.out_dir, "Output directory")->required();

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "Write a dataset labelled by a random planted network");
    synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();
    synth->add_option("--n", sy.n, "Rows");
    synth->add_option("--d", sy.d, "Columns");
    synth->add_option("--hidden", sy.hidden, "Planted neurons");
    synth->add_option("--seed", sy.seed, "Root seed");

    Phase1Args p1;
    auto* phase1 = app.add_subcommand("phase1", "Train the convex network with ADMM and recover its weights");
    phase1->add_option("--features", p1.features, "Feature manifest")->required();
    phase1->add_option("--labels", p1.labels, "Label manifest (n x 1)")->required();
    phase1->add_option("--out-dir", p1.out_dir, "Output directory")->required();
    phase1->add_option("--patterns", p1.opt.patterns, "Sampled activation patterns");
    phase1->add_flag("--enumerate", p1.opt.enumerate, "Enumerate every pattern (d <= 3)");
    phase1->add_option("--seed", p1.opt.seed, "Root seed");
    phase1->add_option("--rho", p1.opt.admm.rho, "ADMM penalty")->check(CLI::PositiveNumber);
    phase1->add_option("--gamma-alpha", p1.gamma_alpha, "Dual step numerator (0 uses rho)");
    phase1->add_option("--beta-reg", p1.opt.beta_reg, "Group lasso weight")->check(CLI::NonNegativeNumber);
    phase1->add_option("--iters", p1.opt.admm.max_iters, "Maximum ADMM iterations")->check(CLI::NonNegativeNumber);
    phase1->add_option("--stop-tol", p1.opt.admm.stop_tol, "Residual stopping tolerance");
    phase1->add_option("--pcg-max-iters", p1.opt.admm.pcg_max_iters, "PCG iteration cap per u-step");
    phase1->add_option("--preconditioner", p1.preconditioner, "PCG preconditioner")
        ->check(CLI::IsMember({"jacobi", "block-jacobi"}));
    phase1->add_option("--recover", p1.recover, "Iterate the network is read from")
        ->check(CLI::IsMember({"final", "ergodic"}));
    phase1->add_option("--prune-tol", p1.opt.prune_tol, "Group norm below which a neuron is dropped");
    phase1->add_flag("--no-standardize", p1.no_standardize, "Train on raw features");

    Phase2Args p2;
    auto* phase2 = app.add_subcommand("phase2", "Fine-tune the second layer on the preference loss");
    phase2->add_option("--network", p2.network, "Phase I network JSON")->required();
    phase2->add_option("--features", p2.features, "Feature manifest")->required();
    phase2->add_option("--labels", p2.labels, "Label manifest (n x 1, +-1)")->required();
    phase2->add_option("--out-dir", p2.out_dir, "Output directory")->required();
    phase2->add_option("--beta-reward", p2.opt.beta_reward, "Reward scale")->check(CLI::PositiveNumber);
    phase2->add_option("--gamma", p2.opt.gamma, "Margin offset");
    phase2->add_option("--iters", p2.opt.iters, "Iterations")->check(CLI::NonNegativeNumber);
    phase2->add_flag("--cold-start", p2.opt.cold_start, "Start from zero instead of the Phase I weights");
    phase2->add_option("--optimizer", p2.optimizer, "agd or adam")->check(CLI::IsMember({"agd", "adam"}));
    phase2->add_option("--lr", p2.opt.adam.learning_rate, "Adam learning rate");
    phase2->add_option("--weight-decay", p2.opt.adam.weight_decay, "Adam decoupled weight decay");

    ScoreArgs sc;
    auto* score = app.add_subcommand("score", "Reweight a candidate pool with a fine-tuned head");
    score->add_option("--head", sc.head, "Head JSON from phase2")->required();
    score->add_option("--candidates", sc.candidates, "Candidate feature manifest")->required();
    score->add_option("--probs", sc.probs, "JSON array (or {\"probs\": [...]}) of base probabilities")->required();
    score->add_option("--out-dir", sc.out_dir, "Output directory")->required();
    score->add_option("--lambda", sc.cfg.lambda, "Guidance scale")->check(CLI::NonNegativeNumber);
    score->add_option("--every-n", sc.cfg.every_n, "Apply guidance every N steps")->check(CLI::PositiveNumber);
    score->add_option("--step", sc.step, "Current step index");
    score->add_option("--top-p", sc.cfg.top_p, "Nucleus mass");
    score->add_option("--top-k", sc.cfg.top_k, "Nucleus size cap")->check(CLI::PositiveNumber);
    score->add_option("--num-candidates", sc.cfg.num_candidates, "Candidates kept")->check(CLI::PositiveNumber);

    OracleArgs orc;
    auto* oracle_cmd = app.add_subcommand("oracle", "Run the reference-solver battery");
    oracle_cmd->add_option("--suite", orc.suite, "Battery name")->check(CLI::IsMember({"standard"}));
    oracle_cmd->add_option("--out-dir", orc.out_dir, "Directory for oracle_report.json");
    oracle_cmd->add_option("--seed", orc.seed, "Root seed");

    try {
        if (const auto path = prescan_config(argc, argv)) {
            json cfg;
            try {
                cfg = json::parse(read_file(*path));
            } catch (const json::exception& e) {
                throw InputError("config '" + *path + "': " + e.what());
            }
            apply_config(app, cfg);
        }
        app.parse(argc, argv);

        CLI::App* sub = app.get_subcommands().front();
        const json config = effective_config(*sub);
        if (sub == extract) return cmd_extract(ex, config);
        if (sub == dataset) return cmd_dataset(ds, config);
        if (sub == synth) return cmd_synth(sy, config);
        if (sub == phase1) return cmd_phase1(p1, config);
        if (sub == phase2) return cmd_phase2(p2, config);
        if (sub == score) return cmd_score(sc, config);
        return cmd_oracle(orc, config);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::input);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::input);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::solver);
    }
}
