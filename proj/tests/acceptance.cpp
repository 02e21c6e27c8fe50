// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "coala/coala.hpp"
#include "coala/oracle.hpp"
#include "coala/oracle_battery.hpp"
#include "coala/pipeline.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace coala;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

AdmmConfig tight(double rho = 0.01) {
    AdmmConfig cfg;
    cfg.rho = rho;
    cfg.max_iters = 200000;
    cfg.stop_tol = 1e-9;
    return cfg;
}

double slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double a = std::log(xs[i]), b = std::log(ys[i]);
        sx += a, sy += b, sxx += a * a, sxy += a * b;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// ------------------------------------------------------------------ 1

Outcome admm_rate() {
    constexpr double kMaxSlope = -0.8, kMaxSeconds = 10.0;
    const auto t0 = Clock::now();
    const auto inst = synthetic::sampled_instance(64, 8, 16, 7);
    const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
    AdmmConfig cfg;
    cfg.rho = 0.01;
    cfg.max_iters = 800;
    cfg.stop_tol = 0.0;
    const auto sol = solve(prog, cfg);
    const double elapsed = seconds_since(t0);
    std::vector<double> ks, rs;
    for (int k = 50; k <= 800; ++k) {
        ks.push_back(k);
        rs.push_back(sol.trace[static_cast<std::size_t>(k - 1)].ergodic_residual);
    }
    const double s = slope(ks, rs);
    return {s <= kMaxSlope && elapsed < kMaxSeconds,
            "P=" + std::to_string(prog.num_patterns()) + " slope " + fmt(s) + " (<= " + fmt(kMaxSlope) + "), " +
                fmt(elapsed) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome rho_robustness() {
    constexpr double kTol = 1e-3;
    const auto inst = synthetic::enumerated_instance(6, 2, 0);
    const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
    std::vector<double> objs;
    for (double rho : {0.001, 0.01, 0.1, 1.0}) objs.push_back(solve(prog, tight(rho)).final_objective());
    double worst = 0.0;
    for (double a : objs)
        for (double b : objs) worst = std::max(worst, relative_gap(a, b));
    return {worst <= kTol, "objectives " + fmt(objs[0]) + "/" + fmt(objs[1]) + "/" + fmt(objs[2]) + "/" + fmt(objs[3]) +
                               ", worst gap " + fmt(worst)};
}

// ------------------------------------------------------------------ 3

Outcome convex_cross_check() {
    constexpr double kTol = 1e-4;
    constexpr int kSeeds = 5;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        const auto inst = synthetic::enumerated_instance(5 + static_cast<Eigen::Index>(seed % 3), 2, seed);
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        const double admm = solve(prog, tight()).final_objective();
        const Vector ref = oracle::projected_gradient_reference(prog, 20000);
        const double pg = oracle::eq3_objective(oracle::dense_F(prog), inst.y, 0.1, ref, prog.d());
        worst = std::max(worst, relative_gap(admm, pg));
    }
    return {worst <= kTol, std::to_string(kSeeds) + " seeds, worst gap " + fmt(worst)};
}

// ------------------------------------------------------------------ 4

Outcome pcg_exactness() {
    constexpr int kSystems = 12;
    constexpr double kPcgTol = 1e-10;
    int ok = 0;
    double worst_ratio = 0.0;
    std::mt19937_64 rng(4);
    for (int t = 0; t < kSystems; ++t) {
        const auto inst = synthetic::sampled_instance(10 + t, 2 + t % 3, 6, 100 + static_cast<std::uint64_t>(t));
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        if (prog.var_dim() > 200) continue;
        const double rho = std::pow(10.0, -3.0 + t % 4);
        const Vector v = synthetic::gaussian_matrix(prog.var_dim(), 1, rng), lambda = synthetic::gaussian_matrix(prog.var_dim(), 1, rng);
        const Vector s = synthetic::gaussian_matrix(prog.slack_dim(), 1, rng).cwiseAbs();
        const Vector nu = synthetic::gaussian_matrix(prog.slack_dim(), 1, rng);
        const Vector dense = oracle::dense_quadratic_solve(prog, v, s, lambda, nu, rho);

        const Matrix a = oracle::dense_normal_matrix(prog, rho);
        const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().minCoeff();
        const auto op = [&](const Vector& x) -> Vector {
            return 2.0 * prog.apply_F_transpose(prog.apply_F(x)) + rho * x + rho * prog.apply_G_transpose(prog.apply_G(x));
        };
        const Vector rhs = 2.0 * prog.apply_F_transpose(prog.targets()) + rho * (v - lambda) + rho * prog.apply_G_transpose(s - nu);
        AdmmConfig cfg;
        cfg.rho = rho;
        const auto pcg = pcg_solve(op, rhs, make_preconditioner(prog, cfg), kPcgTol, 10000);
        const double bound = kPcgTol * std::max(1.0, rhs.norm()) / lmin;
        const double err = (pcg.x - dense).norm();
        // Small slack for the rounding in the dense factorization itself.
        const double allowed = bound + 1e-12 * dense.norm() / lmin;
        worst_ratio = std::max(worst_ratio, err / allowed);
        if (pcg.converged && err <= allowed) ++ok;
    }
    return {ok >= 10 && ok == kSystems, std::to_string(ok) + "/" + std::to_string(kSystems) +
                                            " systems within tol*|rhs|/lambda_min, worst ratio " + fmt(worst_ratio)};
}

// ------------------------------------------------------------------ 5

Outcome agd_rate() {
    constexpr double kMaxSeconds = 5.0;
    const auto t0 = Clock::now();
    const auto ds = synthetic::random_phase2(50, 8, 5);
    const Vector theta0 = Vector::Zero(8);
    const auto fit = agd_minimize(ds, 1.0, 0.5, theta0, 2000);
    const auto ref = oracle::gd_logistic_reference(ds, 1.0, 0.5, 1000000);
    const double elapsed = seconds_since(t0);
    const double l = estimate_lipschitz(ds, 1.0);
    const double budget = 8.0 * l * (theta0 - ref.theta).squaredNorm();
    double worst = 0.0;
    for (std::size_t k = 10; k <= 2000; ++k)
        worst = std::max(worst, (fit.trace.loss[k] - ref.loss) * double(k + 1) * double(k + 1) / budget);
    return {worst <= 1.0 && elapsed < kMaxSeconds,
            "max (loss_k - loss*)(k+1)^2 / 8L|theta0 - theta*|^2 = " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

// ------------------------------------------------------------------ 6

Outcome gradient_check() {
    constexpr double kFdTol = 1e-5, kLn2Tol = 1e-12;
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto ds = synthetic::random_phase2(20 + t, 3 + t % 6, rng());
        const Vector theta = synthetic::gaussian_matrix(ds.width(), 1, rng);
        worst = std::max(worst, oracle::fd_gradient_error(theta, ds, 0.5 + 0.1 * t, 0.25 * (t % 4), 1e-5));
    }
    const auto ds = synthetic::random_phase2(30, 5, 7);
    const double ln2_err = std::abs(coala_loss(Vector::Zero(5), ds, 1.0, 0.0) - std::log(2.0));
    return {worst <= kFdTol && ln2_err <= kLn2Tol, "worst fd error " + fmt(worst) + ", |loss(0) - ln 2| " + fmt(ln2_err)};
}

// ------------------------------------------------------------------ 7

Outcome reformulation_bound() {
    constexpr double kTol = 1e-3;
    int ok = 0;
    double worst_margin = kInfinity;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(seed % 4), d = 1 + static_cast<Eigen::Index>(seed % 2);
        const auto inst = synthetic::enumerated_instance(n, d, 700 + seed);
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        const double convex = solve(prog, tight()).final_objective();
        oracle::NonconvexConfig cfg;
        cfg.neurons = 16;
        cfg.restarts = 5;
        cfg.step = 2e-3;
        cfg.seed = seed;
        const double nonconvex = oracle::nonconvex_multistart(inst.x, inst.y, 0.1, cfg);
        worst_margin = std::min(worst_margin, nonconvex - convex);
        if (nonconvex >= convex - kTol) ++ok;
    }
    return {ok == 10, std::to_string(ok) + "/10 seeds non-convex >= convex - 1e-3, worst margin " + fmt(worst_margin)};
}

// ------------------------------------------------------------------ 8

// Regions of a central arrangement in R^d (d <= 3) counted by Euler's formula on the
// sphere: each plane is a great circle, pairwise intersections are vertices.
std::size_t arrangement_regions(const RowMatrix& x) {
    std::vector<Vector> normals;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Vector r = x.row(i).transpose();
        if (r.norm() < 1e-12) continue;
        r.normalize();
        bool dup = false;
        for (const auto& q : normals) dup = dup || std::abs(std::abs(q.dot(r)) - 1.0) < 1e-12;
        if (!dup) normals.push_back(r);
    }
    const std::size_t c = normals.size();
    if (c == 0) return 1;
    if (x.cols() == 1) return 2;
    if (x.cols() == 2) return 2 * c;
    if (c == 1) return 2;
    std::vector<Eigen::Vector3d> vertices;
    auto vertex_id = [&](const Eigen::Vector3d& p) {
        for (std::size_t k = 0; k < vertices.size(); ++k)
            if ((vertices[k] - p).norm() < 1e-9) return k;
        vertices.push_back(p);
        return vertices.size() - 1;
    };
    std::vector<std::set<std::size_t>> on_circle(c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) {
            const Eigen::Vector3d p = Eigen::Vector3d(normals[i]).cross(Eigen::Vector3d(normals[j])).normalized();
            for (const Eigen::Vector3d& q : {p, Eigen::Vector3d(-p)}) {
                const auto id = vertex_id(q);
                on_circle[i].insert(id);
                on_circle[j].insert(id);
            }
        }
    std::size_t edges = 0;
    for (const auto& s : on_circle) edges += s.size();
    return 2 + edges - vertices.size();
}

Outcome pattern_combinatorics() {
    int ok = 0;
    std::string first_failure;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Eigen::Index n = 3 + static_cast<Eigen::Index>(seed % 8), d = 1 + static_cast<Eigen::Index>(seed % 3);
        std::mt19937_64 rng(800 + seed);
        const RowMatrix x = synthetic::gaussian_matrix(n, d, rng);
        const auto all = enumerate_patterns(x);
        std::set<Mask> masks;
        for (const auto& p : all.patterns) masks.insert(p.mask);
        bool subset = true;
        for (const auto& p : sample_patterns(x, 2000, seed).patterns) subset = subset && masks.count(p.mask);
        const std::size_t regions = arrangement_regions(x);
        const std::size_t bound = oracle::region_count_bound(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
        if (all.size() == regions && all.size() <= bound && subset) {
            ++ok;
        } else if (first_failure.empty()) {
            first_failure = ", first failure n=" + std::to_string(n) + " d=" + std::to_string(d) + " count " +
                            std::to_string(all.size()) + " regions " + std::to_string(regions) + " bound " +
                            std::to_string(bound);
        }
    }
    return {ok == 20, std::to_string(ok) + "/20 matrices: count = regions <= bound, sampled within enumerated" + first_failure};
}

// ------------------------------------------------------------------ 9

Outcome extraction_law() {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> agents(1, 8);
    std::vector<Conversation> convs;
    std::size_t expected = 0;
    for (int i = 0; i < 1000; ++i) {
        Conversation c{"c" + std::to_string(i), i % 2 ? std::optional<std::string>("system text") : std::nullopt, {}};
        const int a = agents(rng);
        for (int k = 0; k < a; ++k) {
            c.turns.push_back({Role::user, "question " + std::to_string(k)});
            c.turns.push_back({Role::agent, "reply " + std::to_string(i) + "." + std::to_string(k)});
        }
        expected += static_cast<std::size_t>(a - 1);
        convs.push_back(std::move(c));
    }
    std::size_t produced = 0;
    extract_corpus(convs, [&](PreferenceTriplet&&) { ++produced; });
    const bool count_ok = produced == expected;

    std::ifstream in(COALA_TEST_DATA "/tutor_conversations.jsonl");
    std::vector<PreferenceTriplet> fixture;
    extract_corpus(in, [&](PreferenceTriplet&& t) { fixture.push_back(std::move(t)); });
    const std::pair<std::string, std::string> printed[] = {
        {"Certainly! The Baroque period", "During the Classical period"},
        {"Of course! Balancing chemical equations", "Absolutely! Let's balance"},
        {"Certainly! Classical conditioning", "Absolutely, you've got it right"}};
    bool pairs_ok = fixture.size() == 3;
    for (std::size_t i = 0; pairs_ok && i < 3; ++i)
        pairs_ok = fixture[i].chosen.rfind(printed[i].first, 0) == 0 && fixture[i].rejected.rfind(printed[i].second, 0) == 0;

    std::vector<std::size_t> items(65606);
    std::iota(items.begin(), items.end(), 0);
    const auto split = split_train_eval(std::move(items), 0.9, 42);
    const bool split_ok = split.train.size() == 59045 && split.eval.size() == 6561;

    return {count_ok && pairs_ok && split_ok,
            "triplets " + std::to_string(produced) + "/" + std::to_string(expected) + ", fixture pairings " +
                (pairs_ok ? "ok" : "WRONG") + ", split " + std::to_string(split.train.size()) + "/" +
                std::to_string(split.eval.size())};
}

// ------------------------------------------------------------------ 10

Outcome guided_identities() {
    constexpr double kTol = 1e-12;
    auto batch_of = [](const Vector& p, std::size_t step) {
        CandidateBatch b;
        b.base_probs = p;
        b.step_index = step;
        return b;
    };
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double identity_err = 0.0, cadence_err = 0.0, validity_err = 0.0;
    bool applied_on_cadence = true;
    for (int t = 0; t < 100; ++t) {
        Vector base(5), s(5);
        for (Eigen::Index i = 0; i < 5; ++i) base[i] = u(rng), s[i] = u(rng);
        const Vector renorm = base / base.sum();
        GuidanceConfig cfg;
        cfg.lambda = 0.0;
        identity_err = std::max(identity_err, (reweight(batch_of(base, 0), s, cfg) - renorm).cwiseAbs().maxCoeff());
        cfg.lambda = 10.0 * u(rng) + 0.5;
        cfg.every_n = 5;
        for (std::size_t step = 0; step <= 10; ++step) {
            const Vector out = reweight(batch_of(base, step), s, cfg);
            validity_err = std::max({validity_err, std::abs(out.sum() - 1.0), std::max(0.0, -out.minCoeff())});
            if (step % 5 != 0) cadence_err = std::max(cadence_err, (out - renorm).cwiseAbs().maxCoeff());
            else if (s.maxCoeff() > s.minCoeff()) applied_on_cadence = applied_on_cadence && (out - renorm).norm() > 1e-6;
        }
    }
    GuidanceConfig cfg;
    cfg.lambda = std::log(3.0);
    const Vector odds = reweight(batch_of((Vector(2) << 0.5, 0.5).finished(), 0), (Vector(2) << 0.0, 1.0).finished(), cfg);
    const double odds_err = std::max(std::abs(odds[0] - 0.25), std::abs(odds[1] - 0.75));
    const bool pass = identity_err <= kTol && cadence_err <= kTol && validity_err <= kTol && odds_err <= kTol && applied_on_cadence;
    return {pass, "lambda=0 err " + fmt(identity_err) + ", off-cadence err " + fmt(cadence_err) + ", validity err " +
                      fmt(validity_err) + ", odds (" + fmt(odds[0]) + ", " + fmt(odds[1]) + ")"};
}

// ------------------------------------------------------------------ 11

Outcome planted_pipeline() {
    constexpr double kMinAccuracy = 0.99, kMaxSeconds = 60.0;
    const auto t0 = Clock::now();
    const auto data = synthetic::planted(200, 8, 4, 11);
    // Labels are reproduced by the planted network itself.
    const double planted_acc = sign_accuracy(data.planted, data.x, data.labels);
    const auto p1 = run_phase1(data.x, data.labels, Phase1Options{});
    const RowMatrix x = p1.standardizer ? p1.standardizer->apply(data.x) : data.x;
    const auto p2 = run_phase2(p1.net, x, data.labels, Phase2Options{});
    const double elapsed = seconds_since(t0);
    const bool pass = planted_acc == 1.0 && p1.accuracy >= kMinAccuracy && p2.final_loss < p2.initial_loss &&
                      elapsed < kMaxSeconds;
    return {pass, "phase I accuracy " + fmt(p1.accuracy) + " (width " + std::to_string(p1.net.width()) +
                      "), phase II loss " + fmt(p2.initial_loss) + " -> " + fmt(p2.final_loss) + ", " + fmt(elapsed) + " s"};
}

// ------------------------------------------------------------------ 12

int run_cli(const std::string& args) {
    const int status = std::system((std::string(COALA_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> digest_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), root).string();
        if (e.path().filename() == "run_manifest.json") {
            auto j = nlohmann::json::parse(read_file(e.path()));
            j.erase("wall_clock_seconds");
            out[rel] = sha256_hex(j.dump());
        } else {
            out[rel] = sha256_file(e.path());
        }
    }
    return out;
}

Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / ("coala_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    std::vector<std::map<std::string, std::string>> runs;
    bool commands_ok = true;
    for (int repeat = 0; repeat < 2; ++repeat) {
        // Same paths both times, so the run manifests are comparable too.
        const fs::path d = base;
        fs::remove_all(d);
        const std::string data = (d / "data").string(), p1 = (d / "p1").string(), p2 = (d / "p2").string();
        fs::create_directories(d);
        write_file(d / "probs.json", "[0.35, 0.25, 0.2, 0.1, 0.06, 0.04]");
        save_features(d / "cand.json", FeatureMatrix{synthetic::planted(6, 8, 2, 3).x, std::nullopt});
        commands_ok = commands_ok && run_cli("synth --out-dir " + data + " --n 200 --d 8 --hidden 4 --seed 12") == 0;
        commands_ok = commands_ok && run_cli("phase1 --features " + data + "/features.json --labels " + data +
                                             "/labels.json --out-dir " + p1 + " --seed 12") == 0;
        commands_ok = commands_ok && run_cli("phase2 --network " + p1 + "/network.json --features " + data +
                                             "/features.json --labels " + data + "/labels.json --out-dir " + p2) == 0;
        commands_ok = commands_ok && run_cli("score --head " + p2 + "/head.json --candidates " + (d / "cand.json").string() +
                                             " --probs " + (d / "probs.json").string() + " --lambda 2 --out-dir " +
                                             (d / "score").string()) == 0;
        runs.push_back(digest_tree(d));
    }
    fs::remove_all(base);
    const bool same = runs[0] == runs[1];
    return {commands_ok && same, std::to_string(runs[0].size()) + " files, " + (same ? "byte-identical" : "DIFFER") +
                                     (commands_ok ? "" : ", a command failed")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"ADMM ergodic rate", admm_rate},
        {"rho robustness", rho_robustness},
        {"convex cross-check", convex_cross_check},
        {"u-subproblem exactness", pcg_exactness},
        {"AGD rate", agd_rate},
        {"gradient correctness", gradient_check},
        {"reformulation bound", reformulation_bound},
        {"pattern combinatorics", pattern_combinatorics},
        {"extraction law", extraction_law},
        {"guided-scoring identities", guided_identities},
        {"planted pipeline", planted_pipeline},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << "criterion " << (i + 1) << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
                  << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
