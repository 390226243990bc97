#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "facefuse/model.hpp"

namespace facefuse {

// Binary tensor file: magic "TNSR", u32 version=1, u32 rank, u32 extents,
// then float32 payload, all little-endian row-major. Rank 0 is rejected;
// scalars travel as rank-1 extent-1.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string hex64(std::uint64_t v);

// splitmix64 finalizer over (seed, salt); pins derived streams such as the
// per-epoch shuffle order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Fisher-Yates with an explicit reduction so the order does not depend on
// the standard library's shuffle implementation.
void deterministic_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng);

struct Dataset {
    Shape image_shape;                        // C, H, W
    std::vector<std::string> attribute_names; // T entries
    std::vector<Tensor> images;               // each C x H x W, values in [0,1]
    std::vector<int> identities;
    std::vector<std::vector<int>> attributes; // per sample, T bits
    std::uint64_t fingerprint = 0;            // fnv1a over manifest bytes
    std::filesystem::path manifest_path;

    std::size_t size() const { return images.size(); }
    std::size_t attribute_count() const { return attribute_names.size(); }
    std::size_t identity_count() const;
};

// Manifest: `# shape C H W`, then `path,identity,attr:<name>,...`, then rows.
// Paths resolve relative to the manifest directory. Errors carry line numbers.
Dataset load_dataset(const std::filesystem::path& manifest);

// Indices j whose attribute is constant within every identity over `subset`
// (pass the train split so test labels never shape the model).
std::vector<std::size_t> filter_identity_attributes(const Dataset& d,
                                                    const std::vector<std::size_t>& subset);

// Per-identity split: floor(frac * n_i) train samples, at least one held out.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_per_identity(
    const Dataset& d, Real train_fraction, std::uint64_t seed);

std::vector<Real> channel_means(const Dataset& d, const std::vector<std::size_t>& indices);

// Stacks samples into a batch, subtracting per-channel means and keeping
// only the attributes in `attr_subset`.
Batch make_batch(const Dataset& d, const std::vector<std::size_t>& indices,
                 const std::vector<Real>& means, const std::vector<std::size_t>& attr_subset);

struct SynthSpec {
    std::size_t num_identities = 8;
    std::size_t images_per_identity = 20;
    std::size_t channels = 3;
    std::size_t image_size = 64;
    std::size_t confusable_pairs = 2;
    std::size_t transient_attributes = 0;
    Real noise = 0.05;
    void validate() const;
    // Identity attributes are the binary code of the identity id, wide
    // enough that confusable-pair members always differ in bit 0.
    std::size_t identity_attribute_count() const;
};

struct SynthGroundTruth {
    std::filesystem::path manifest;
    std::vector<std::string> attribute_names;            // identity attrs then transient
    std::vector<std::vector<int>> identity_attributes;   // per identity, identity attrs only
    std::vector<std::pair<int, int>> confusable_pairs;
};

// Writes manifest + image tensors + meta.json under out_dir. Identities in a
// confusable pair share one base pattern and noise law, so images alone
// cannot separate them; their attribute codes differ by construction.
SynthGroundTruth gen_synthetic(const SynthSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

}  // namespace facefuse
