#include "facefuse/optim.hpp"

#include <cmath>

namespace facefuse {

namespace {

std::vector<int> attribute_labels(const Tensor& bits) {
    std::vector<int> labels(bits.numel());
    for (std::size_t i = 0; i < bits.numel(); ++i) {
        const Real v = bits[i];
        if (v == 0.0) {
            labels[i] = 0;
        } else if (v == 1.0) {
            labels[i] = 1;
        } else {
            throw DataError("attribute label must be 0 or 1, got " + std::to_string(v));
        }
    }
    return labels;
}

void collect_grads(Tape& tape, const std::string& prefix, const VarSet& staged,
                   std::map<std::string, Tensor>& grads) {
    for (const auto& [name, var] : staged) {
        grads.emplace(prefix + name, tape.grad(var));
    }
}

void check_batch(const FusionModel& model, const Batch& batch) {
    const std::size_t n = batch.images.empty() ? 0 : batch.images.extent(0);
    if (n == 0) throw DataError("batch is empty");
    if (batch.identities.size() != n) {
        throw DimensionError("batch has " + std::to_string(batch.identities.size()) +
                             " identity labels for " + std::to_string(n) + " images");
    }
    if (batch.attributes.rank() != 2 || batch.attributes.extent(0) != n ||
        batch.attributes.extent(1) != model.T) {
        throw DimensionError("batch attribute block must be " + std::to_string(n) + "x" +
                             std::to_string(model.T) + ", got " +
                             shape_str(batch.attributes.shape()));
    }
}

}  // namespace

void HyperParams::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("opt.alpha must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("opt.beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("opt.beta2 must lie in [0,1)");
    if (!(eps_guard > 0.0)) throw ConfigError("opt.eps_guard must be positive");
}

GroupOptState GroupOptState::init(std::string group_id, const std::vector<std::string>& members,
                                  const std::map<std::string, Tensor*>& params) {
    GroupOptState s;
    s.group_id = std::move(group_id);
    s.members = members;
    for (const std::string& id : s.members) {
        auto it = params.find(id);
        if (it == params.end()) {
            throw ContractError("group " + s.group_id + " member '" + id +
                                "' is not a model parameter");
        }
        s.m.emplace(id, Tensor::zeros(it->second->shape()));
        s.u.emplace(id, Tensor::zeros(it->second->shape()));
    }
    return s;
}

std::map<std::string, Tensor*> qualified_params(FusionModel& model) {
    std::map<std::string, Tensor*> out;
    for (auto& [name, t] : model.w1) out.emplace("w1/" + name, &t);
    for (auto& [name, t] : model.w21) out.emplace("w21/" + name, &t);
    for (auto& [name, t] : model.w22) out.emplace("w22/" + name, &t);
    return out;
}

std::pair<GroupOptState, GroupOptState> make_opt_states(const FusionModel& model) {
    auto params = qualified_params(const_cast<FusionModel&>(model));
    std::vector<std::string> theta1;
    std::vector<std::string> theta2;
    for (const auto& [id, _] : params) {
        const bool in_w22 = id.rfind("w22/", 0) == 0;
        if (!in_w22) theta1.push_back(id);
        if (model.scenario == Scenario::NPD) {
            if (id.rfind("w1/", 0) == 0 || in_w22) theta2.push_back(id);
        } else {
            theta2.push_back(id);
        }
    }
    return {GroupOptState::init("theta1", theta1, params),
            GroupOptState::init("theta2", theta2, params)};
}

void adamax_update(GroupOptState& state, const HyperParams& hp,
                   const std::map<std::string, Tensor*>& params,
                   const std::map<std::string, Tensor>& grads) {
    hp.validate();
    if (grads.size() != state.members.size()) {
        throw ContractError("group " + state.group_id + " expects " +
                            std::to_string(state.members.size()) + " gradients, got " +
                            std::to_string(grads.size()));
    }
    state.t += 1;
    const Real lr = hp.alpha / (1.0 - std::pow(hp.beta1, static_cast<Real>(state.t)));
    for (const std::string& id : state.members) {
        auto git = grads.find(id);
        if (git == grads.end()) {
            throw ContractError("group " + state.group_id + " missing gradient for '" + id + "'");
        }
        auto pit = params.find(id);
        if (pit == params.end()) {
            throw ContractError("group " + state.group_id + " member '" + id +
                                "' is not a model parameter");
        }
        Tensor& theta = *pit->second;
        const Tensor& g = git->second;
        if (!g.same_shape(theta)) {
            throw DimensionError("gradient shape " + shape_str(g.shape()) +
                                 " does not match parameter '" + id + "' " +
                                 shape_str(theta.shape()));
        }
        Tensor& m = state.m.at(id);
        Tensor& u = state.u.at(id);
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            u[i] = std::max(hp.beta2 * u[i], std::fabs(g[i]));
            theta[i] -= lr * m[i] / (u[i] + hp.eps_guard);
        }
        ensure_finite(theta, "adamax_update");
    }
}

Var attribute_loss(Var probs, const Tensor& attribute_bits) {
    const Tensor& pv = probs.value();
    if (pv.rank() != 3 || pv.extent(2) != 2) {
        throw DimensionError("attribute_loss expects NxTx2 probabilities, got " +
                             shape_str(pv.shape()));
    }
    if (attribute_bits.rank() != 2 || attribute_bits.extent(0) != pv.extent(0) ||
        attribute_bits.extent(1) != pv.extent(1)) {
        throw DimensionError("attribute_loss labels must be NxT, got " +
                             shape_str(attribute_bits.shape()) + " for probs " +
                             shape_str(pv.shape()));
    }
    const Real n = static_cast<Real>(pv.extent(0));
    return ops::cross_entropy(probs, attribute_labels(attribute_bits), 1.0 / n);
}

Var identity_loss(Var probs, const std::vector<int>& identities) {
    const Tensor& pv = probs.value();
    if (pv.rank() != 2) {
        throw DimensionError("identity_loss expects NxC probabilities, got " +
                             shape_str(pv.shape()));
    }
    const Real n = static_cast<Real>(pv.extent(0));
    return ops::cross_entropy(probs, identities, 1.0 / n);
}

Real identity_accuracy(const Tensor& probs, const std::vector<int>& identities) {
    if (probs.rank() != 2 || probs.extent(0) != identities.size()) {
        throw DimensionError("identity_accuracy expects NxC probs with N labels");
    }
    const std::size_t n = probs.extent(0), c = probs.extent(1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (probs(i, j) > probs(i, best)) best = j;
        }
        if (static_cast<int>(best) == identities[i]) ++hits;
    }
    return static_cast<Real>(hits) / static_cast<Real>(n);
}

std::vector<Real> attribute_accuracy(const Tensor& probs, const Tensor& attribute_bits) {
    if (probs.rank() != 3 || probs.extent(2) != 2 ||
        attribute_bits.rank() != 2 || attribute_bits.extent(0) != probs.extent(0) ||
        attribute_bits.extent(1) != probs.extent(1)) {
        throw DimensionError("attribute_accuracy expects NxTx2 probs with NxT labels");
    }
    const std::size_t n = probs.extent(0), t = probs.extent(1);
    std::vector<Real> acc(t, 0.0);
    for (std::size_t j = 0; j < t; ++j) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const int pred = probs[(i * t + j) * 2 + 1] > probs[(i * t + j) * 2] ? 1 : 0;
            if (static_cast<Real>(pred) == attribute_bits(i, j)) ++hits;
        }
        acc[j] = static_cast<Real>(hits) / static_cast<Real>(n);
    }
    return acc;
}

StepResult step_attributes(FusionModel& model, GroupOptState& opt1, const HyperParams& hp,
                           const Batch& batch) {
    check_batch(model, batch);
    Tape tape;
    VarSet p1 = stage_params(tape, model.w1);
    VarSet p21 = stage_params(tape, model.w21);
    Var x = tape.leaf(batch.images);
    Var feats = features(model, p1, x);
    Var probs = predict_attributes(model, p21, feats);
    Var l1 = attribute_loss(probs, batch.attributes);
    tape.backward(l1);
    std::map<std::string, Tensor> grads;
    collect_grads(tape, "w1/", p1, grads);
    collect_grads(tape, "w21/", p21, grads);
    auto params = qualified_params(model);
    adamax_update(opt1, hp, params, grads);
    StepResult result;
    result.l1 = l1.value()[0];
    result.attr_acc = attribute_accuracy(probs.value(), batch.attributes);
    return result;
}

StepResult joint_step(FusionModel& model, GroupOptState& opt1, GroupOptState& opt2,
                      const HyperParams& hp, const Batch& batch) {
    check_batch(model, batch);
    StepResult result;
    if (model.scenario != Scenario::NPD) {
        const StepResult a = step_attributes(model, opt1, hp, batch);
        result.l1 = a.l1;
        result.attr_acc = a.attr_acc;
    }

    Tape tape;
    VarSet p1 = stage_params(tape, model.w1);
    VarSet p21 = stage_params(tape, model.w21);
    VarSet p22 = stage_params(tape, model.w22);
    Var x = tape.leaf(batch.images);
    Var feats = features(model, p1, x);
    Var fused = feats;
    if (model.scenario == Scenario::PA) {
        fused = fuse(feats, positive_slice(predict_attributes(model, p21, feats)),
                     model.scenario);
    } else if (model.scenario == Scenario::GT) {
        fused = fuse(feats, tape.leaf(batch.attributes), model.scenario);
    }
    Var probs = predict_identity(model, p22, fused);
    Var l2 = identity_loss(probs, batch.identities);
    tape.backward(l2);

    std::map<std::string, Tensor> grads;
    collect_grads(tape, "w1/", p1, grads);
    if (model.scenario != Scenario::NPD) collect_grads(tape, "w21/", p21, grads);
    collect_grads(tape, "w22/", p22, grads);
    auto params = qualified_params(model);
    adamax_update(opt2, hp, params, grads);
    result.l2 = l2.value()[0];
    result.id_acc = identity_accuracy(probs.value(), batch.identities);
    return result;
}

}  // namespace facefuse
