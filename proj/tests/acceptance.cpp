// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Training criteria run on generated synthetic sets small enough for a
// single core; every tolerance is pinned here as a named constant.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "facefuse/commands.hpp"
#include "facefuse/kernels.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;

namespace {

constexpr Real kGradThreshold = 1e-4;        // max relative error, central differences
constexpr Real kGradcheckBudgetSec = 120.0;  // wall clock for the whole sweep
constexpr Real kOracleTol = 1e-12;           // impl vs scalar reference, 100 steps
constexpr Real kHandStepTol = 1e-9;          // |theta' - 0.998| on the worked example
constexpr Real kSoftmaxRowTol = 1e-6;        // |row sum - 1|
constexpr Real kOverfitLossTarget = 0.05;    // smoothed l1 and l2 must dip below
constexpr std::size_t kOverfitIterBudget = 300;
constexpr Real kOverfitBudgetSec = 300.0;
constexpr Real kOverfitRiseFactor = 1.2;     // vs running min after the warmup
constexpr std::size_t kOverfitWarmup = 100;
constexpr std::size_t kSmoothWindow = 10;
constexpr Real kGtMargin = 0.10;             // gt must beat npd by this much
constexpr Real kAttrSlack = 0.02;            // per-attribute joint vs separate slack

struct Gate {
    int failures = 0;

    void report(int n, const std::string& label, bool ok, const std::string& detail) {
        std::printf("criterion %d (%s): %s%s%s\n", n, label.c_str(), ok ? "PASS" : "FAIL",
                    detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }

    template <typename F>
    void run(int n, const std::string& label, F&& body) {
        try {
            auto [ok, detail] = body();
            report(n, label, ok, detail);
        } catch (const std::exception& e) {
            report(n, label, false, std::string("exception: ") + e.what());
        }
    }
};

std::string fmt(Real v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Scalar parameter driven through the production update path.
struct ScalarParam {
    Tensor theta = Tensor::scalar(0.0);
    GroupOptState state;
    HyperParams hp;

    explicit ScalarParam(Real init) {
        theta[0] = init;
        std::map<std::string, Tensor*> params{{"p", &theta}};
        state = GroupOptState::init("g", {"p"}, params);
    }

    void step(Real g) {
        std::map<std::string, Tensor*> params{{"p", &theta}};
        std::map<std::string, Tensor> grads;
        grads.emplace("p", Tensor::scalar(g));
        adamax_update(state, hp, params, grads);
    }
};

ArchConfig bench_arch() {
    ArchConfig a;
    a.input_channels = 1;
    a.input_h = 16;
    a.input_w = 16;
    a.stage_channels = {8, 16};
    a.stage_convs = {1, 1};
    a.fc_width = 32;
    return a;
}

RunConfig bench_config(Scenario sc, const std::string& manifest, const std::string& out,
                       std::uint64_t seed, std::size_t epochs) {
    RunConfig cfg;
    cfg.scenario = sc;
    cfg.arch = bench_arch();
    cfg.hp.alpha = 0.005;
    cfg.batch = 16;
    cfg.epochs = epochs;
    cfg.manifest = manifest;
    cfg.seed = seed;
    cfg.out = out;
    return cfg;
}

fs::path gen_set(const std::string& name, std::size_t identities, std::size_t images,
                 std::size_t pairs, std::uint64_t seed) {
    SynthSpec spec;
    spec.num_identities = identities;
    spec.images_per_identity = images;
    spec.channels = 1;
    spec.image_size = 16;
    spec.confusable_pairs = pairs;
    spec.transient_attributes = 0;
    spec.noise = 0.05;
    return gen_synthetic(spec, seed, fs::path("acceptance_tmp") / name).manifest;
}

EvalReport eval_test_split(const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(fs::path(out_dir) / "checkpoint.fuse");
    const RunConfig cfg =
        RunConfig::from_keyvalues(parse_keyvalues(ck.config_text, "checkpoint config"));
    const Dataset d = load_dataset(cfg.manifest);
    auto [train_idx, test_idx] = split_per_identity(d, cfg.train_fraction, cfg.seed);
    const auto cols = map_attribute_columns(d, ck.kept_attribute_names);
    return evaluate_subset(ck, d, test_idx, cols, cfg.batch);
}

std::vector<Real> smoothed(const std::vector<Real>& v, std::size_t window) {
    std::vector<Real> out(v.size(), 0.0);
    Real acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= window) acc -= v[i - window];
        out[i] = acc / static_cast<Real>(std::min(i + 1, window));
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// ---- criterion bodies ----

std::pair<bool, std::string> gradient_checks() {
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    const int rc = run_gradcheck(log);
    const double secs = seconds_since(t0);
    std::string tail = log.str();
    while (!tail.empty() && tail.back() == '\n') tail.pop_back();
    const std::size_t nl = tail.find_last_of('\n');
    if (nl != std::string::npos) tail = tail.substr(nl + 1);
    const bool ok = rc == 0 && secs < kGradcheckBudgetSec;
    return {ok, tail + ", " + fmt(secs) + "s"};
}

std::pair<bool, std::string> optimizer_oracle() {
    ScalarParam hand(1.0);
    hand.step(0.5);
    oracles::ScalarAdaMaxRef hand_ref;
    const Real ref1 = hand_ref.step(1.0, 0.5);
    const bool hand_ok =
        std::fabs(hand.theta[0] - 0.998) < kHandStepTol && std::fabs(hand.theta[0] - ref1) < kOracleTol;

    ScalarParam p(0.1);
    oracles::ScalarAdaMaxRef ref;
    Real theta_ref = 0.1;
    Real max_diff = 0.0;
    for (int i = 0; i < 100; ++i) {
        p.step(p.theta[0]);
        theta_ref = ref.step(theta_ref, theta_ref);
        max_diff = std::max(max_diff, std::fabs(p.theta[0] - theta_ref));
    }
    const bool traj_ok = max_diff <= kOracleTol && std::fabs(p.theta[0]) < 1e-2;
    return {hand_ok && traj_ok, "hand step theta'=" + fmt(hand.theta[0]) +
                                    ", 100-step max deviation " + fmt(max_diff)};
}

std::pair<bool, std::string> structural_invariants() {
    std::vector<std::string> broken;

    {  // u recurrence, exactly
        ScalarParam p(0.4);
        HyperParams hp;
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<Real> dist(-1.0, 1.0);
        Real u_prev = 0.0;
        for (int i = 0; i < 80; ++i) {
            const Real g = dist(rng);
            p.step(g);
            const Real u = p.state.u.at("p")[0];
            if (u != std::max(hp.beta2 * u_prev, std::fabs(g)) || u < std::fabs(g)) {
                broken.push_back("u recurrence");
                break;
            }
            u_prev = u;
        }
    }

    {  // group state independence
        ArchConfig a = bench_arch();
        FusionModel m = FusionModel::init(Scenario::PA, a, 3, 4, 3);
        auto [opt1, opt2] = make_opt_states(m);
        std::mt19937_64 rng(8);
        Batch b;
        b.images = random_uniform({4, 1, 16, 16}, -0.5, 0.5, rng);
        b.identities = {0, 1, 2, 3};
        b.attributes = Tensor::zeros({4, 3});
        for (std::size_t i = 0; i < b.attributes.numel(); ++i)
            b.attributes[i] = static_cast<Real>(rng() % 2);
        const GroupOptState snap = opt2;
        step_attributes(m, opt1, HyperParams{}, b);
        bool same = snap.t == opt2.t;
        for (const auto& [k, v] : snap.m) same = same && bitwise_equal(v, opt2.m.at(k));
        for (const auto& [k, v] : snap.u) same = same && bitwise_equal(v, opt2.u.at(k));
        if (!same) broken.push_back("group independence");
    }

    {  // softmax rows
        std::mt19937_64 rng(11);
        bool ok = true;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            Tape tape;
            Var s = ops::softmax(tape.leaf(random_uniform({8, 11}, -30.0, 30.0, rng)));
            for (std::size_t r = 0; r < 8; ++r) {
                Real total = 0.0;
                for (std::size_t c = 0; c < 11; ++c) {
                    total += s.value()(r, c);
                    ok = ok && s.value()(r, c) > 0.0;
                }
                ok = ok && std::fabs(total - 1.0) < kSoftmaxRowTol;
            }
        }
        if (!ok) broken.push_back("softmax rows");
    }

    {  // split partition
        const fs::path manifest = gen_set("invariants", 6, 6, 0, 40);
        const Dataset d = load_dataset(manifest);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto [train, test] = split_per_identity(d, 0.8, seed);
            std::vector<std::size_t> all = train;
            all.insert(all.end(), test.begin(), test.end());
            std::sort(all.begin(), all.end());
            bool ok = all.size() == d.size();
            for (std::size_t i = 0; ok && i < all.size(); ++i) ok = all[i] == i;
            ok = ok && train.size() == 24 && test.size() == 12;
            if (!ok) {
                broken.push_back("split partition");
                break;
            }
        }
    }

    {  // tensor and checkpoint round trips
        fs::create_directories("acceptance_tmp");
        std::mt19937_64 rng(14);
        Tensor t = random_uniform({3, 5, 2}, 0.0, 1.0, rng);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t[i] = static_cast<Real>(static_cast<float>(t[i]));  // 32-bit payload on disk
        }
        write_tensor("acceptance_tmp/rt.tnsr", t);
        if (!bitwise_equal(t, read_tensor("acceptance_tmp/rt.tnsr"))) {
            broken.push_back("tensor round trip");
        }

        FusionModel m = FusionModel::init(Scenario::GT, bench_arch(), 3, 6, 9);
        auto [opt1, opt2] = make_opt_states(m);
        Checkpoint ck{m, opt1, opt2, "seed=9\n", 42, {0, 1, 2}, {"a", "b", "c"}, {0.5}, 7};
        save_checkpoint(ck, "acceptance_tmp/rt.fuse");
        const Checkpoint back = load_checkpoint("acceptance_tmp/rt.fuse");
        save_checkpoint(back, "acceptance_tmp/rt2.fuse");
        if (read_file("acceptance_tmp/rt.fuse") != read_file("acceptance_tmp/rt2.fuse")) {
            broken.push_back("checkpoint round trip");
        }
    }

    if (broken.empty()) return {true, "u recurrence, state independence, softmax rows, "
                                      "split partition, round trips"};
    std::string detail = "broken:";
    for (const auto& b : broken) detail += " " + b;
    return {false, detail};
}

std::pair<bool, std::string> joint_overfit() {
    const fs::path manifest = gen_set("overfit", 8, 8, 0, 50);
    RunConfig cfg = bench_config(Scenario::PA, manifest.string(), "acceptance_tmp/overfit", 1,
                                 kOverfitIterBudget / 3);  // 48 train samples, 3 iters/epoch
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    run_train(cfg, log);
    const double secs = seconds_since(t0);

    const MetricsFile mf = read_metrics("acceptance_tmp/overfit/metrics.csv");
    std::vector<Real> l1, l2;
    for (const auto& row : mf.rows) {
        if (!row.l1 || !row.l2) return {false, "missing loss columns"};
        l1.push_back(*row.l1);
        l2.push_back(*row.l2);
    }
    const std::vector<Real> s1 = smoothed(l1, kSmoothWindow);
    const std::vector<Real> s2 = smoothed(l2, kSmoothWindow);

    std::size_t hit1 = 0, hit2 = 0;
    bool reached1 = false, reached2 = false;
    for (std::size_t i = 0; i < s1.size(); ++i) {
        if (!reached1 && s1[i] < kOverfitLossTarget) { reached1 = true; hit1 = i + 1; }
        if (!reached2 && s2[i] < kOverfitLossTarget) { reached2 = true; hit2 = i + 1; }
    }

    bool stable = true;
    Real run_min1 = s1.empty() ? 0.0 : s1[0], run_min2 = s2.empty() ? 0.0 : s2[0];
    for (std::size_t i = 0; i < s1.size(); ++i) {
        run_min1 = std::min(run_min1, s1[i]);
        run_min2 = std::min(run_min2, s2[i]);
        if (i + 1 > kOverfitWarmup) {
            stable = stable && s1[i] <= kOverfitRiseFactor * run_min1 + 1e-9;
            stable = stable && s2[i] <= kOverfitRiseFactor * run_min2 + 1e-9;
        }
    }

    const bool ok = reached1 && reached2 && hit1 <= kOverfitIterBudget &&
                    hit2 <= kOverfitIterBudget && stable && secs < kOverfitBudgetSec;
    std::string detail = "l1<" + fmt(kOverfitLossTarget) + " at iter " +
                         (reached1 ? std::to_string(hit1) : std::string("never")) + ", l2 at " +
                         (reached2 ? std::to_string(hit2) : std::string("never")) +
                         (stable ? "" : ", unstable") + ", " + fmt(secs) + "s";
    return {ok, detail};
}

struct ScenarioMeans {
    Real npd = 0.0, gt = 0.0, pa = 0.0;
};

ScenarioMeans train_matrix(const fs::path& manifest, const std::vector<std::uint64_t>& seeds,
                           std::size_t epochs) {
    ScenarioMeans m;
    for (std::uint64_t seed : seeds) {
        for (Scenario sc : {Scenario::NPD, Scenario::GT, Scenario::PA}) {
            const std::string out = std::string("acceptance_tmp/mx_") + scenario_name(sc) +
                                    "_s" + std::to_string(seed);
            std::ostringstream log;
            run_train(bench_config(sc, manifest.string(), out, seed, epochs), log);
            const EvalReport rep = eval_test_split(out);
            if (sc == Scenario::NPD) m.npd += rep.identity_accuracy;
            if (sc == Scenario::GT) m.gt += rep.identity_accuracy;
            if (sc == Scenario::PA) m.pa += rep.identity_accuracy;
        }
    }
    const Real n = static_cast<Real>(seeds.size());
    m.npd /= n;
    m.gt /= n;
    m.pa /= n;
    return m;
}

std::pair<bool, std::string> scenario_ordering(const ScenarioMeans& m) {
    const bool gt_ok = m.gt >= m.npd + kGtMargin;
    const bool pa_ok = m.pa >= m.npd;
    return {gt_ok && pa_ok, "mean test identity accuracy npd=" + fmt(m.npd) +
                                " gt=" + fmt(m.gt) + " pa=" + fmt(m.pa)};
}

// Joint vs separate runs on a pair-free set: every attribute is learnable,
// so the comparison measures training mode rather than irreducible noise.
std::pair<bool, std::string> joint_vs_separate(const fs::path& manifest,
                                               const std::vector<std::uint64_t>& seeds,
                                               std::size_t epochs) {
    std::vector<std::vector<Real>> joint_attr, sep_attr;
    for (std::uint64_t seed : seeds) {
        const std::string jout = "acceptance_tmp/joint_s" + std::to_string(seed);
        std::ostringstream log;
        run_train(bench_config(Scenario::PA, manifest.string(), jout, seed, epochs), log);
        joint_attr.push_back(eval_test_split(jout).attribute_accuracy);

        const std::string sout = "acceptance_tmp/sep_s" + std::to_string(seed);
        RunConfig cfg = bench_config(Scenario::PA, manifest.string(), sout, seed, epochs);
        cfg.mode = TrainMode::AttributesOnly;
        run_train(cfg, log);
        sep_attr.push_back(eval_test_split(sout).attribute_accuracy);
    }

    const std::size_t T = sep_attr.front().size();
    bool ok = true;
    Real mean_delta = 0.0;
    std::string per = "per-attribute joint-separate:";
    for (std::size_t j = 0; j < T; ++j) {
        Real joint = 0.0, sep = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            joint += joint_attr[s][j];
            sep += sep_attr[s][j];
        }
        joint /= static_cast<Real>(seeds.size());
        sep /= static_cast<Real>(seeds.size());
        const Real delta = joint - sep;
        mean_delta += delta / static_cast<Real>(T);
        per += " " + fmt(delta);
        ok = ok && delta >= -kAttrSlack;
    }
    ok = ok && mean_delta >= 0.0;
    return {ok, per + ", mean " + fmt(mean_delta)};
}

std::pair<bool, std::string> reproducibility(const fs::path& manifest) {
    const kernels::Backend previous = kernels::backend();
    kernels::set_backend(kernels::Backend::Serial);
    RunConfig cfg = bench_config(Scenario::PA, manifest.string(), "acceptance_tmp/repro", 1, 3);
    std::ostringstream log;
    run_train(cfg, log);
    const std::string m1 = strip_seconds_column(read_file("acceptance_tmp/repro/metrics.csv"));
    const std::string c1 = read_file("acceptance_tmp/repro/checkpoint.fuse");
    run_train(cfg, log);
    const std::string m2 = strip_seconds_column(read_file("acceptance_tmp/repro/metrics.csv"));
    const std::string c2 = read_file("acceptance_tmp/repro/checkpoint.fuse");
    kernels::set_backend(previous);
    const bool ok = m1 == m2 && c1 == c2 && !c1.empty();
    return {ok, ok ? "metrics and checkpoint bytes identical across reruns"
                   : "rerun diverged"};
}

}  // namespace

int main() {
    fs::remove_all("acceptance_tmp");
    fs::create_directories("acceptance_tmp");

    Gate gate;
    gate.run(1, "finite-difference gradient checks", gradient_checks);
    gate.run(2, "optimizer matches the scalar reference", optimizer_oracle);
    gate.run(3, "structural invariants", structural_invariants);
    gate.run(4, "joint training drives both losses down", joint_overfit);

    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const std::size_t epochs = 30;
    gate.run(5, "attribute fusion beats the no-attribute baseline", [&] {
        const fs::path manifest = gen_set("pairs", 8, 20, 2, 60);
        return scenario_ordering(train_matrix(manifest, seeds, epochs));
    });
    gate.run(6, "joint training keeps attribute accuracy", [&] {
        const fs::path manifest = gen_set("suite", 8, 20, 0, 61);
        return joint_vs_separate(manifest, seeds, epochs);
    });
    gate.run(7, "bitwise reproducibility",
             [&] { return reproducibility(gen_set("repro_data", 8, 8, 0, 70)); });

    if (gate.failures == 0) {
        std::printf("acceptance: all 7 criteria passed\n");
    } else {
        std::printf("acceptance: %d criteria failed\n", gate.failures);
    }
    return gate.failures == 0 ? 0 : 1;
}
