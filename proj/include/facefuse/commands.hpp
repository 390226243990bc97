#pragma once

#include <iosfwd>
#include <vector>

#include "facefuse/checkpoint.hpp"
#include "facefuse/config.hpp"
#include "facefuse/metrics.hpp"

namespace facefuse {

// Train under cfg: split, filter identity attributes, run the alternating
// optimizer over seeded shuffles, stream metrics rows, checkpoint per epoch.
// Returns the process exit code (0 on success); invalid inputs throw.
int run_train(const RunConfig& cfg, std::ostream& log);

struct EvalOptions {
    std::string checkpoint;
    std::string manifest;  // empty: the manifest recorded in the checkpoint
    std::string scenario;  // empty: the checkpoint's scenario; mismatch is an error
    std::string split = "test";  // train | test | all
    std::string out;       // empty: directory holding the checkpoint
};

int run_eval(const EvalOptions& opt, std::ostream& log);

int run_gradcheck(std::ostream& log);

int run_gen_synth(const SynthConfig& cfg, std::ostream& log);

struct CompareOptions {
    std::vector<std::string> inputs;
    std::string out = "compare";
};

int run_compare(const CompareOptions& opt, std::ostream& log);

// Maps checkpoint attribute names onto dataset columns; missing name is a
// data error.
std::vector<std::size_t> map_attribute_columns(const Dataset& d,
                                               const std::vector<std::string>& names);

struct EvalReport {
    std::size_t samples = 0;
    Real identity_accuracy = 0.0;
    std::vector<Real> attribute_accuracy;  // aligned with ck.kept_attribute_names
};

// Accuracy of the checkpointed model over the given sample indices,
// fusing per the checkpoint's scenario.
EvalReport evaluate_subset(const Checkpoint& ck, const Dataset& d,
                           const std::vector<std::size_t>& indices,
                           const std::vector<std::size_t>& attr_cols, std::size_t batch_size);

}  // namespace facefuse
