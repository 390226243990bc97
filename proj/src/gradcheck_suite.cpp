#include <cmath>
#include <ostream>

#include "facefuse/commands.hpp"
#include "facefuse/gradcheck.hpp"

namespace facefuse {

namespace {

constexpr Real kThreshold = 1e-4;

struct Suite {
    std::ostream& log;
    std::size_t checks = 0;
    std::size_t failures = 0;
    Real worst = 0.0;

    void record(const std::string& name, const GradCheckResult& r) {
        ++checks;
        const bool pass = r.ok(kThreshold);
        if (!pass) ++failures;
        worst = std::max(worst, r.max_rel_err);
        log << "gradcheck: " << name << " max_rel_err=" << format_real(r.max_rel_err) << " "
            << (pass ? "PASS" : "FAIL") << "\n";
    }
    void check(const std::string& name, const TapeFn& fn, const Tensor& x) {
        record(name, grad_check(fn, x));
    }
};

ArchConfig tiny_arch() {
    ArchConfig a;
    a.input_channels = 2;
    a.input_h = 8;
    a.input_w = 8;
    a.stage_channels = {4, 6};
    a.stage_convs = {1, 1};
    a.fc_width = 12;
    return a;
}

Batch random_batch(const FusionModel& m, std::size_t n, std::mt19937_64& rng) {
    Batch b;
    b.images = random_uniform({n, m.arch.input_channels, m.arch.input_h, m.arch.input_w},
                              -0.5, 0.5, rng);
    b.identities.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        b.identities[i] = static_cast<int>(i % m.C);
    }
    b.attributes = Tensor({n, m.T});
    for (std::size_t i = 0; i < b.attributes.numel(); ++i) {
        b.attributes[i] = static_cast<Real>(rng() & 1u);
    }
    return b;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % k);
    return labels;
}

Real forward_loss(const FusionModel& m, const Batch& batch, bool identity_path) {
    Tape tape;
    StagedModel st = stage(tape, m);
    Var x = tape.leaf(batch.images);
    Var feats = features(m, st.p1, x);
    if (!identity_path) {
        Var probs = predict_attributes(m, st.p21, feats);
        return attribute_loss(probs, batch.attributes).value()[0];
    }
    Var fused = feats;
    if (m.scenario == Scenario::PA) {
        fused = fuse(feats, positive_slice(predict_attributes(m, st.p21, feats)), m.scenario);
    } else if (m.scenario == Scenario::GT) {
        fused = fuse(feats, tape.leaf(batch.attributes), m.scenario);
    }
    Var probs = predict_identity(m, st.p22, fused);
    return identity_loss(probs, batch.identities).value()[0];
}

std::map<std::string, Tensor> analytic_grads(const FusionModel& m, const Batch& batch,
                                             bool identity_path) {
    Tape tape;
    StagedModel st = stage(tape, m);
    Var x = tape.leaf(batch.images);
    Var feats = features(m, st.p1, x);
    Var loss;
    if (!identity_path) {
        loss = attribute_loss(predict_attributes(m, st.p21, feats), batch.attributes);
    } else {
        Var fused = feats;
        if (m.scenario == Scenario::PA) {
            fused = fuse(feats, positive_slice(predict_attributes(m, st.p21, feats)), m.scenario);
        } else if (m.scenario == Scenario::GT) {
            fused = fuse(feats, tape.leaf(batch.attributes), m.scenario);
        }
        loss = identity_loss(predict_identity(m, st.p22, fused), batch.identities);
    }
    tape.backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : st.p1) grads.emplace("w1/" + name, tape.grad(var));
    for (const auto& [name, var] : st.p21) grads.emplace("w21/" + name, tape.grad(var));
    for (const auto& [name, var] : st.p22) grads.emplace("w22/" + name, tape.grad(var));
    return grads;
}

void end_to_end(Suite& suite, const std::string& label, Scenario scenario, bool identity_path,
                std::uint64_t seed) {
    FusionModel model = FusionModel::init(scenario, tiny_arch(), 3, 4, seed);
    std::mt19937_64 rng(seed + 17);
    const Batch batch = random_batch(model, 4, rng);
    const auto grads = analytic_grads(model, batch, identity_path);

    for (const auto& [name, tensor] : qualified_params(model)) {
        if (!identity_path && name.rfind("w22/", 0) == 0) continue;
        auto loss = [&model, &batch, identity_path, id = name](const Tensor& v) {
            FusionModel probe = model;
            *qualified_params(probe).at(id) = v;
            return forward_loss(probe, batch, identity_path);
        };
        suite.record(label + " wrt " + name, grad_check_against(loss, *tensor, grads.at(name)));
    }
}

}  // namespace

int run_gradcheck(std::ostream& log) {
    Suite suite{log};
    std::mt19937_64 rng(20240617);

    {
        const Tensor x = random_uniform({3, 4}, -1.0, 1.0, rng);
        const Tensor w = random_uniform({4, 2}, -1.0, 1.0, rng);
        const Tensor b = random_uniform({2}, -1.0, 1.0, rng);
        const Tensor r = random_uniform({3, 2}, -1.0, 1.0, rng);
        suite.check("affine wrt x", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::affine(v, t.leaf(w), t.leaf(b)), r);
        }, x);
        suite.check("affine wrt w", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::affine(t.leaf(x), v, t.leaf(b)), r);
        }, w);
        suite.check("affine wrt b", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::affine(t.leaf(x), t.leaf(w), v), r);
        }, b);
    }
    {
        const Tensor x = random_uniform({1, 2, 6, 6}, -1.0, 1.0, rng);
        const Tensor k = random_uniform({3, 2, 3, 3}, -1.0, 1.0, rng);
        const Tensor r = random_uniform({1, 3, 6, 6}, -1.0, 1.0, rng);
        suite.check("conv2d wrt x", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::conv2d(v, t.leaf(k)), r);
        }, x);
        suite.check("conv2d wrt k", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::conv2d(t.leaf(x), v), r);
        }, k);
    }
    {
        const Tensor x = random_uniform({1, 1, 8, 8}, 0.0, 1.0, rng);
        const Tensor r = random_uniform({1, 1, 4, 4}, -1.0, 1.0, rng);
        suite.check("maxpool2 wrt x", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::maxpool2(v), r);
        }, x);
    }
    {
        Tensor x = random_uniform({4, 5}, 0.1, 1.0, rng);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (rng() & 1u) x[i] = -x[i];  // keep inputs away from the kink at 0
        }
        const Tensor r = random_uniform({4, 5}, -1.0, 1.0, rng);
        suite.check("relu wrt x", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::relu(v), r);
        }, x);
    }
    {
        const Tensor x = random_uniform({3, 6}, -2.0, 2.0, rng);
        const Tensor r = random_uniform({3, 6}, -1.0, 1.0, rng);
        suite.check("softmax wrt logits", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::softmax(v), r);
        }, x);
        const std::vector<int> labels = random_labels(3, 6, rng);
        suite.check("softmax+cross_entropy wrt logits", [&](Tape&, Var v) {
            return ops::cross_entropy(ops::softmax(v), labels, 1.0 / 3.0);
        }, x);
    }
    {
        const Tensor a = random_uniform({2, 3}, -1.0, 1.0, rng);
        const Tensor b = random_uniform({2, 4}, -1.0, 1.0, rng);
        const Tensor r = random_uniform({2, 7}, -1.0, 1.0, rng);
        suite.check("concat wrt first part", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::concat({v, t.leaf(b)}, 1), r);
        }, a);
        suite.check("concat wrt second part", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::concat({t.leaf(a), v}, 1), r);
        }, b);
    }
    {
        const Tensor x = random_uniform({2, 6}, -1.0, 1.0, rng);
        const Tensor r = random_uniform({2, 3, 2}, -1.0, 1.0, rng);
        suite.check("reshape wrt x", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::reshape(v, {2, 3, 2}), r);
        }, x);
        const Tensor rs = random_uniform({2, 3}, -1.0, 1.0, rng);
        suite.check("select_last wrt x", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::select_last(ops::reshape(v, {2, 3, 2}), 1), rs);
        }, x);
    }
    {
        const Tensor x = random_uniform({3, 3}, -1.0, 1.0, rng);
        const Tensor c = random_uniform({3, 3}, -1.0, 1.0, rng);
        const Tensor r = random_uniform({3, 3}, -1.0, 1.0, rng);
        suite.check("add wrt x", [&](Tape& t, Var v) {
            return ops::weighted_sum(ops::add(v, t.leaf(c)), r);
        }, x);
        suite.check("scale wrt x", [&](Tape&, Var v) {
            return ops::weighted_sum(ops::scale(v, 1.7), r);
        }, x);
        suite.check("square wrt x", [&](Tape&, Var v) { return ops::sum(ops::square(v)); }, x);
        suite.check("sum wrt x", [&](Tape&, Var v) { return ops::sum(v); }, x);
        suite.check("weighted_sum wrt x", [&](Tape&, Var v) { return ops::weighted_sum(v, r); },
                    x);
    }
    {
        const Tensor p = random_uniform({4, 3}, 0.1, 0.9, rng);
        const std::vector<int> labels = random_labels(4, 3, rng);
        suite.check("cross_entropy wrt probs", [&](Tape&, Var v) {
            return ops::cross_entropy(v, labels, 0.25);
        }, p);
    }
    {
        const Tensor logits = random_uniform({3, 4 * 2}, -1.5, 1.5, rng);
        Tensor bits({3, 4});
        for (std::size_t i = 0; i < bits.numel(); ++i) bits[i] = static_cast<Real>(rng() & 1u);
        suite.check("attribute_loss wrt logits", [&](Tape&, Var v) {
            return attribute_loss(ops::softmax(ops::reshape(v, {3, 4, 2})), bits);
        }, logits);
        const Tensor id_logits = random_uniform({3, 5}, -1.5, 1.5, rng);
        const std::vector<int> ids = random_labels(3, 5, rng);
        suite.check("identity_loss wrt logits", [&](Tape&, Var v) {
            return identity_loss(ops::softmax(v), ids);
        }, id_logits);
    }

    end_to_end(suite, "L1", Scenario::PA, false, 31);
    end_to_end(suite, "L2-pa", Scenario::PA, true, 47);
    end_to_end(suite, "L2-gt", Scenario::GT, true, 59);

    log << "gradcheck: " << suite.checks << " checks, " << (suite.checks - suite.failures)
        << " passed, worst max_rel_err=" << format_real(suite.worst) << "\n";
    if (suite.failures > 0) {
        log << "gradcheck: " << suite.failures << " FAILED (threshold "
            << format_real(kThreshold) << ")\n";
        return 1;
    }
    return 0;
}

}  // namespace facefuse
