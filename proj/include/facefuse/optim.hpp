#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "facefuse/model.hpp"

namespace facefuse {

struct HyperParams {
    Real alpha = 0.002;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps_guard = 1e-8;
    void validate() const;
};

// AdaMax state for one parameter group. The two groups cover overlapping
// parameters but never share state: each keeps its own m, u, and t.
struct GroupOptState {
    std::string group_id;
    std::vector<std::string> members;  // qualified ids, sorted
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> u;
    std::uint64_t t = 0;

    static GroupOptState init(std::string group_id, const std::vector<std::string>& members,
                              const std::map<std::string, Tensor*>& params);
};

// View of all model parameters under qualified ids ("w1/<name>", ...).
std::map<std::string, Tensor*> qualified_params(FusionModel& model);

// theta1 = [w1, w21]; theta2 = [w1, w21, w22] (npd: [w1, w22]).
std::pair<GroupOptState, GroupOptState> make_opt_states(const FusionModel& model);

// One AdaMax step over the group: t += 1; m = b1*m + (1-b1)*g;
// u = max(b2*u, |g|); p -= alpha/(1-b1^t) * m/(u + eps_guard).
// `grads` must cover exactly the group members.
void adamax_update(GroupOptState& state, const HyperParams& hp,
                   const std::map<std::string, Tensor*>& params,
                   const std::map<std::string, Tensor>& grads);

// L1 = -(1/N) sum_{i<=N, j<=T} log p(bit_ij); probs is N x T x 2.
Var attribute_loss(Var probs, const Tensor& attribute_bits);

// L2 = -(1/N) sum_i log p(identity_i); probs is N x C.
Var identity_loss(Var probs, const std::vector<int>& identities);

// Fraction of rows whose argmax matches the label; ties resolve to the
// lower index.
Real identity_accuracy(const Tensor& probs, const std::vector<int>& identities);

// Per-attribute match fraction from N x T x 2 probabilities.
std::vector<Real> attribute_accuracy(const Tensor& probs, const Tensor& attribute_bits);

// Losses and batch accuracies measured before the respective update.
struct StepResult {
    std::optional<Real> l1;
    std::optional<Real> l2;
    std::optional<Real> id_acc;
    std::vector<Real> attr_acc;
};

// Algorithm step (a) alone: forward f, L1, update theta1.
StepResult step_attributes(FusionModel& model, GroupOptState& opt1, const HyperParams& hp,
                           const Batch& batch);

// Full iteration: step (a) on theta1, then step (b) on theta2 with the
// already-updated weights. npd skips (a) and fuses nothing. Returns the
// pre-update loss values.
StepResult joint_step(FusionModel& model, GroupOptState& opt1, GroupOptState& opt2,
                      const HyperParams& hp, const Batch& batch);

}  // namespace facefuse
