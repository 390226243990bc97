#include "facefuse/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace facefuse {

namespace {

constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kTensorVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t decode_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

[[noreturn]] void manifest_error(const std::filesystem::path& manifest, std::size_t line,
                                 const std::string& msg) {
    throw DataError(manifest.string() + ":" + std::to_string(line) + ": " + msg);
}

int parse_int(const std::string& s, bool& ok) {
    ok = false;
    if (s.empty()) return 0;
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        return 0;
    }
    ok = pos == s.size();
    return v;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

void deterministic_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    if (t.rank() == 0) throw FormatError("tensor file format forbids rank 0");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kTensorMagic, 4);
    put_u32(os, kTensorVersion);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    const std::string name = path.string();
    if (bytes.size() < 12) throw FormatError(name + ": truncated tensor header");
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
        throw FormatError(name + ": bad magic, not a tensor file");
    }
    const std::uint32_t version = decode_u32(bytes.data() + 4);
    if (version != kTensorVersion) {
        throw FormatError(name + ": unsupported tensor format version " + std::to_string(version));
    }
    const std::uint32_t rank = decode_u32(bytes.data() + 8);
    if (rank == 0) throw FormatError(name + ": rank 0 is forbidden");
    std::size_t off = 12;
    if (bytes.size() < off + 4ull * rank) throw FormatError(name + ": truncated extent list");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
        shape[r] = decode_u32(bytes.data() + off);
        off += 4;
        if (shape[r] == 0) throw FormatError(name + ": zero extent");
        numel *= shape[r];
    }
    if (bytes.size() < off + 4ull * numel) throw FormatError(name + ": truncated payload");
    if (bytes.size() > off + 4ull * numel) throw FormatError(name + ": trailing bytes");
    std::vector<Real> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        data[i] = static_cast<Real>(std::bit_cast<float>(decode_u32(bytes.data() + off)));
        off += 4;
    }
    return Tensor(std::move(shape), std::move(data));
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::size_t Dataset::identity_count() const {
    int mx = -1;
    for (int id : identities) mx = std::max(mx, id);
    return static_cast<std::size_t>(mx + 1);
}

Dataset load_dataset(const std::filesystem::path& manifest) {
    std::ifstream is(manifest, std::ios::binary);
    if (!is) throw DataError("cannot open manifest '" + manifest.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    Dataset d;
    d.manifest_path = manifest;
    d.fingerprint = fnv1a64(text.data(), text.size());
    const std::filesystem::path base = manifest.parent_path();

    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(lines, line)) manifest_error(manifest, 1, "empty manifest");
    ++lineno;
    line = strip_cr(line);
    {
        std::istringstream ss(line);
        std::string hash, word;
        std::size_t c = 0, h = 0, w = 0;
        if (!(ss >> hash >> word >> c >> h >> w) || hash != "#" || word != "shape" ||
            (ss >> std::ws, !ss.eof()) || c == 0 || h == 0 || w == 0) {
            manifest_error(manifest, lineno, "expected '# shape C H W', got '" + line + "'");
        }
        d.image_shape = {c, h, w};
    }

    if (!std::getline(lines, line)) manifest_error(manifest, 2, "missing header row");
    ++lineno;
    line = strip_cr(line);
    {
        const auto fields = split_csv(line);
        if (fields.size() < 2 || fields[0] != "path" || fields[1] != "identity") {
            manifest_error(manifest, lineno, "header must start 'path,identity', got '" + line + "'");
        }
        for (std::size_t i = 2; i < fields.size(); ++i) {
            if (fields[i].rfind("attr:", 0) != 0 || fields[i].size() <= 5) {
                manifest_error(manifest, lineno, "attribute column '" + fields[i] +
                                                     "' must be named 'attr:<name>'");
            }
            const std::string name = fields[i].substr(5);
            if (std::find(d.attribute_names.begin(), d.attribute_names.end(), name) !=
                d.attribute_names.end()) {
                manifest_error(manifest, lineno, "duplicate attribute name '" + name + "'");
            }
            d.attribute_names.push_back(name);
        }
    }
    const std::size_t T = d.attribute_names.size();

    struct RowInfo {
        std::size_t line;
        int identity;
        std::vector<int> attrs;
    };
    std::map<std::string, RowInfo> seen;

    while (std::getline(lines, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 2 + T) {
            manifest_error(manifest, lineno,
                           "expected " + std::to_string(2 + T) + " fields, got " +
                               std::to_string(fields.size()));
        }
        const std::string& rel = fields[0];
        if (rel.empty()) manifest_error(manifest, lineno, "empty path");
        bool ok = false;
        const int identity = parse_int(fields[1], ok);
        if (!ok || identity < 0) {
            manifest_error(manifest, lineno, "identity '" + fields[1] +
                                                 "' is not a non-negative integer");
        }
        std::vector<int> attrs(T);
        for (std::size_t j = 0; j < T; ++j) {
            const std::string& bit = fields[2 + j];
            if (bit == "0") {
                attrs[j] = 0;
            } else if (bit == "1") {
                attrs[j] = 1;
            } else {
                manifest_error(manifest, lineno, "attribute '" + d.attribute_names[j] +
                                                     "' value '" + bit + "' is not 0 or 1");
            }
        }
        auto it = seen.find(rel);
        if (it != seen.end()) {
            if (it->second.identity != identity || it->second.attrs != attrs) {
                manifest_error(manifest, lineno, "path '" + rel +
                                                     "' conflicts with line " +
                                                     std::to_string(it->second.line));
            }
        } else {
            seen.emplace(rel, RowInfo{lineno, identity, attrs});
        }

        Tensor img;
        try {
            img = read_tensor(base / rel);
        } catch (const Error& e) {
            manifest_error(manifest, lineno, e.what());
        }
        if (img.shape() != d.image_shape) {
            manifest_error(manifest, lineno, "image shape " + shape_str(img.shape()) +
                                                 " does not match declared " +
                                                 shape_str(d.image_shape));
        }
        for (std::size_t i = 0; i < img.numel(); ++i) {
            if (!(img[i] >= 0.0 && img[i] <= 1.0)) {
                manifest_error(manifest, lineno, "pixel value " + std::to_string(img[i]) +
                                                     " outside [0,1] in '" + rel + "'");
            }
        }
        d.images.push_back(std::move(img));
        d.identities.push_back(identity);
        d.attributes.push_back(std::move(attrs));
    }

    if (d.images.empty()) manifest_error(manifest, lineno, "manifest has no sample rows");

    std::vector<std::size_t> counts(d.identity_count(), 0);
    for (int id : d.identities) counts[static_cast<std::size_t>(id)] += 1;
    for (std::size_t id = 0; id < counts.size(); ++id) {
        if (counts[id] == 0) {
            throw DataError(manifest.string() + ": identity ids must be contiguous from 0; id " +
                            std::to_string(id) + " has no samples");
        }
        if (counts[id] < 2) {
            throw DataError(manifest.string() + ": identity " + std::to_string(id) +
                            " has a single sample; at least 2 are required for a split");
        }
    }
    return d;
}

std::vector<std::size_t> filter_identity_attributes(const Dataset& d,
                                                    const std::vector<std::size_t>& subset) {
    const std::size_t T = d.attribute_count();
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < T; ++j) {
        std::map<int, int> first_value;
        bool constant = true;
        for (std::size_t idx : subset) {
            if (idx >= d.size()) throw ContractError("sample index out of range");
            const int id = d.identities[idx];
            const int v = d.attributes[idx][j];
            auto [it, inserted] = first_value.emplace(id, v);
            if (!inserted && it->second != v) {
                constant = false;
                break;
            }
        }
        if (constant) kept.push_back(j);
    }
    return kept;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_per_identity(
    const Dataset& d, Real train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train fraction must lie in (0,1)");
    }
    std::map<int, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < d.size(); ++i) by_identity[d.identities[i]].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train, test;
    for (auto& [id, idxs] : by_identity) {
        if (idxs.size() < 2) {
            throw DataError("identity " + std::to_string(id) +
                            " has a single sample; cannot split");
        }
        deterministic_shuffle(idxs, rng);
        std::size_t n_train = static_cast<std::size_t>(
            std::floor(train_fraction * static_cast<Real>(idxs.size())));
        n_train = std::min(n_train, idxs.size() - 1);
        train.insert(train.end(), idxs.begin(), idxs.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), idxs.begin() + static_cast<std::ptrdiff_t>(n_train), idxs.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

std::vector<Real> channel_means(const Dataset& d, const std::vector<std::size_t>& indices) {
    if (d.image_shape.size() != 3) throw ContractError("dataset image shape must be CxHxW");
    const std::size_t C = d.image_shape[0];
    const std::size_t plane = d.image_shape[1] * d.image_shape[2];
    std::vector<Real> sums(C, 0.0);
    for (std::size_t idx : indices) {
        if (idx >= d.size()) throw ContractError("sample index out of range");
        const Tensor& img = d.images[idx];
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < plane; ++i) sums[c] += img[c * plane + i];
        }
    }
    const Real denom = static_cast<Real>(indices.size() * plane);
    if (denom == 0.0) throw DataError("cannot compute channel means over an empty index set");
    for (Real& s : sums) s /= denom;
    return sums;
}

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& indices,
                 const std::vector<Real>& means, const std::vector<std::size_t>& attr_subset) {
    if (indices.empty()) throw DataError("cannot build an empty batch");
    const std::size_t C = d.image_shape[0], H = d.image_shape[1], W = d.image_shape[2];
    if (means.size() != C) {
        throw DimensionError("expected " + std::to_string(C) + " channel means, got " +
                             std::to_string(means.size()));
    }
    const std::size_t plane = H * W;
    Batch b;
    b.images = Tensor({indices.size(), C, H, W});
    b.attributes = Tensor({indices.size(), attr_subset.size()});
    b.identities.reserve(indices.size());
    for (std::size_t n = 0; n < indices.size(); ++n) {
        const std::size_t idx = indices[n];
        if (idx >= d.size()) throw ContractError("sample index out of range");
        const Tensor& img = d.images[idx];
        Real* dst = b.images.data() + n * C * plane;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                dst[c * plane + i] = img[c * plane + i] - means[c];
            }
        }
        b.identities.push_back(d.identities[idx]);
        for (std::size_t j = 0; j < attr_subset.size(); ++j) {
            const std::size_t a = attr_subset[j];
            if (a >= d.attribute_count()) throw ContractError("attribute index out of range");
            b.attributes(n, j) = static_cast<Real>(d.attributes[idx][a]);
        }
    }
    return b;
}

void SynthSpec::validate() const {
    if (num_identities < 2) throw ConfigError("synth.identities must be at least 2");
    if (images_per_identity < 2) throw ConfigError("synth.images must be at least 2 per identity");
    if (channels == 0) throw ConfigError("synth.channels must be positive");
    if (image_size == 0) throw ConfigError("synth.size must be positive");
    if (confusable_pairs * 2 > num_identities) {
        throw ConfigError("synth.pairs needs 2 identities per confusable pair");
    }
    if (!(noise >= 0.0)) throw ConfigError("synth.noise must be non-negative");
}

std::size_t SynthSpec::identity_attribute_count() const {
    std::size_t bits = 1;
    while ((std::size_t{1} << bits) < num_identities) ++bits;
    return bits;
}

SynthGroundTruth gen_synthetic(const SynthSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir / "images");

    const std::size_t tid = spec.identity_attribute_count();
    SynthGroundTruth gt;
    for (std::size_t j = 0; j < tid; ++j) gt.attribute_names.push_back("code" + std::to_string(j));
    for (std::size_t j = 0; j < spec.transient_attributes; ++j) {
        gt.attribute_names.push_back("transient" + std::to_string(j));
    }
    for (std::size_t p = 0; p < spec.confusable_pairs; ++p) {
        gt.confusable_pairs.emplace_back(static_cast<int>(2 * p), static_cast<int>(2 * p + 1));
    }
    for (std::size_t id = 0; id < spec.num_identities; ++id) {
        std::vector<int> code(tid);
        for (std::size_t j = 0; j < tid; ++j) code[j] = static_cast<int>((id >> j) & 1u);
        gt.identity_attributes.push_back(std::move(code));
    }

    // Paired identities share a base pattern; the rest get their own.
    const std::size_t paired = 2 * spec.confusable_pairs;
    const std::size_t num_patterns = spec.num_identities - spec.confusable_pairs;
    std::mt19937_64 rng(seed);
    std::vector<Tensor> patterns;
    patterns.reserve(num_patterns);
    const Shape img_shape{spec.channels, spec.image_size, spec.image_size};
    for (std::size_t p = 0; p < num_patterns; ++p) {
        patterns.push_back(random_uniform(img_shape, 0.25, 0.75, rng));
    }
    auto pattern_of = [&](std::size_t id) {
        return id < paired ? id / 2 : id - spec.confusable_pairs;
    };

    std::ostringstream manifest;
    manifest << "# shape " << spec.channels << " " << spec.image_size << " " << spec.image_size
             << "\n";
    manifest << "path,identity";
    for (const std::string& name : gt.attribute_names) manifest << ",attr:" << name;
    manifest << "\n";

    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (std::size_t id = 0; id < spec.num_identities; ++id) {
        const Tensor& base = patterns[pattern_of(id)];
        for (std::size_t k = 0; k < spec.images_per_identity; ++k) {
            Tensor img(img_shape);
            for (std::size_t i = 0; i < img.numel(); ++i) {
                img[i] = std::clamp(base[i] + spec.noise * gauss(rng), 0.0, 1.0);
            }
            std::vector<int> transient(spec.transient_attributes);
            for (std::size_t j = 0; j < spec.transient_attributes; ++j) {
                transient[j] = static_cast<int>(rng() & 1u);
            }
            const std::string rel =
                "images/id" + std::to_string(id) + "_" + std::to_string(k) + ".tnsr";
            write_tensor(out_dir / rel, img);
            manifest << rel << "," << id;
            for (int bit : gt.identity_attributes[id]) manifest << "," << bit;
            for (int bit : transient) manifest << "," << bit;
            manifest << "\n";
        }
    }

    gt.manifest = out_dir / "manifest.csv";
    {
        std::ofstream os(gt.manifest, std::ios::binary);
        if (!os) throw IoError("cannot write '" + gt.manifest.string() + "'");
        os << manifest.str();
    }

    nlohmann::json meta;
    meta["seed"] = seed;
    meta["spec"] = {{"identities", spec.num_identities},
                    {"images_per_identity", spec.images_per_identity},
                    {"channels", spec.channels},
                    {"image_size", spec.image_size},
                    {"confusable_pairs", spec.confusable_pairs},
                    {"transient_attributes", spec.transient_attributes},
                    {"noise", spec.noise}};
    meta["attribute_names"] = gt.attribute_names;
    meta["identity_attributes"] = gt.identity_attributes;
    meta["confusable_pairs"] = gt.confusable_pairs;
    meta["manifest"] = "manifest.csv";
    {
        std::ofstream os(out_dir / "meta.json", std::ios::binary);
        if (!os) throw IoError("cannot write meta.json");
        os << meta.dump(2) << "\n";
    }
    return gt;
}

}  // namespace facefuse
