#include "facefuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace facefuse {

namespace {

constexpr char kMagic[4] = {'F', 'U', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, Real v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const Tensor& t) {
    put_u64(os, t.rank());
    for (std::size_t e : t.shape()) put_u64(os, e);
    for (std::size_t i = 0; i < t.numel(); ++i) put_f64(os, t[i]);
}

void put_param_set(std::ostream& os, const ParamSet& ps) {
    put_u64(os, ps.size());
    for (const auto& [name, t] : ps) {
        put_str(os, name);
        put_tensor(os, t);
    }
}

void put_opt_state(std::ostream& os, const GroupOptState& s) {
    put_str(os, s.group_id);
    put_u64(os, s.t);
    put_u64(os, s.members.size());
    for (const std::string& id : s.members) {
        put_str(os, id);
        put_tensor(os, s.m.at(id));
        put_tensor(os, s.u.at(id));
    }
}

struct Reader {
    std::ifstream is;
    std::string name;

    void read_raw(void* dst, std::size_t len) {
        is.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
        if (static_cast<std::size_t>(is.gcount()) != len) {
            throw FormatError(name + ": truncated checkpoint");
        }
    }
    std::uint64_t u64() {
        unsigned char b[8];
        read_raw(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    Real f64() { return std::bit_cast<Real>(u64()); }
    std::string str() {
        const std::uint64_t len = u64();
        if (len > (1ull << 20)) throw FormatError(name + ": implausible string length");
        std::string s(len, '\0');
        read_raw(s.data(), len);
        return s;
    }
    Tensor tensor() {
        const std::uint64_t rank = u64();
        if (rank == 0 || rank > 8) throw FormatError(name + ": implausible tensor rank");
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            shape[r] = u64();
            if (shape[r] == 0) throw FormatError(name + ": zero extent");
            numel *= shape[r];
        }
        std::vector<Real> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = f64();
        return Tensor(std::move(shape), std::move(data));
    }
    ParamSet param_set() {
        const std::uint64_t n = u64();
        ParamSet ps;
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string key = str();
            ps.emplace(std::move(key), tensor());
        }
        return ps;
    }
    GroupOptState opt_state() {
        GroupOptState s;
        s.group_id = str();
        s.t = u64();
        const std::uint64_t n = u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string id = str();
            s.members.push_back(id);
            s.m.emplace(id, tensor());
            s.u.emplace(id, tensor());
        }
        return s;
    }
};

std::map<std::string, Shape> expected_shapes(const std::vector<LayerSpec>& specs) {
    std::map<std::string, Shape> out;
    for (const LayerSpec& s : specs) {
        if (s.kind == LayerKind::Conv3x3) {
            out.emplace(s.name + ".w", Shape{s.width, s.in_width, 3, 3});
        } else if (s.kind == LayerKind::Affine) {
            out.emplace(s.name + ".w", Shape{s.in_width, s.width});
            out.emplace(s.name + ".b", Shape{s.width});
        }
    }
    return out;
}

void check_param_set(const std::string& file, const std::string& label, const ParamSet& ps,
                     const std::map<std::string, Shape>& expected) {
    if (ps.size() != expected.size()) {
        throw FormatError(file + ": " + label + " holds " + std::to_string(ps.size()) +
                          " tensors, expected " + std::to_string(expected.size()));
    }
    for (const auto& [name, shape] : expected) {
        auto it = ps.find(name);
        if (it == ps.end()) throw FormatError(file + ": " + label + " missing '" + name + "'");
        if (it->second.shape() != shape) {
            throw FormatError(file + ": " + label + " tensor '" + name + "' has shape " +
                              shape_str(it->second.shape()) + ", expected " + shape_str(shape));
        }
    }
}

void check_opt_state(const std::string& file, const GroupOptState& s,
                     const std::map<std::string, Tensor*>& params) {
    for (const std::string& id : s.members) {
        auto it = params.find(id);
        if (it == params.end()) {
            throw FormatError(file + ": optimizer state " + s.group_id +
                              " references unknown parameter '" + id + "'");
        }
        if (!s.m.at(id).same_shape(*it->second) || !s.u.at(id).same_shape(*it->second)) {
            throw FormatError(file + ": optimizer state " + s.group_id +
                              " shape mismatch on '" + id + "'");
        }
    }
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    ck.model.validate();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
        os.write(kMagic, 4);
        put_u64(os, kVersion);
        put_str(os, ck.config_text);
        put_u64(os, ck.dataset_fingerprint);
        put_u64(os, ck.epoch);
        put_u64(os, static_cast<std::uint64_t>(ck.model.scenario));
        put_u64(os, ck.model.T);
        put_u64(os, ck.model.C);

        const ArchConfig& a = ck.model.arch;
        put_u64(os, a.input_channels);
        put_u64(os, a.input_h);
        put_u64(os, a.input_w);
        put_u64(os, a.stage_channels.size());
        for (std::size_t c : a.stage_channels) put_u64(os, c);
        for (std::size_t c : a.stage_convs) put_u64(os, c);
        put_u64(os, a.fc_width);

        put_u64(os, ck.kept_attributes.size());
        for (std::size_t j : ck.kept_attributes) put_u64(os, j);
        for (const std::string& n : ck.kept_attribute_names) put_str(os, n);
        put_u64(os, ck.means.size());
        for (Real m : ck.means) put_f64(os, m);

        put_param_set(os, ck.model.w1);
        put_param_set(os, ck.model.w21);
        put_param_set(os, ck.model.w22);
        put_opt_state(os, ck.opt1);
        put_opt_state(os, ck.opt2);
        if (!os) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r;
    r.name = path.string();
    r.is.open(path, std::ios::binary);
    if (!r.is) throw IoError("cannot open '" + r.name + "'");

    char magic[4];
    r.read_raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(r.name + ": bad magic, not a checkpoint");
    }
    const std::uint64_t version = r.u64();
    if (version != kVersion) {
        throw FormatError(r.name + ": unsupported checkpoint version " + std::to_string(version));
    }

    Checkpoint ck;
    ck.config_text = r.str();
    ck.dataset_fingerprint = r.u64();
    ck.epoch = r.u64();
    const std::uint64_t scen = r.u64();
    if (scen > 2) throw FormatError(r.name + ": invalid scenario tag");
    ck.model.scenario = static_cast<Scenario>(scen);
    ck.model.T = r.u64();
    ck.model.C = r.u64();

    ArchConfig& a = ck.model.arch;
    a.input_channels = r.u64();
    a.input_h = r.u64();
    a.input_w = r.u64();
    const std::uint64_t stages = r.u64();
    if (stages == 0 || stages > 16) throw FormatError(r.name + ": implausible stage count");
    a.stage_channels.resize(stages);
    a.stage_convs.resize(stages);
    for (auto& c : a.stage_channels) c = r.u64();
    for (auto& c : a.stage_convs) c = r.u64();
    a.fc_width = r.u64();
    a.validate();

    const std::uint64_t kept = r.u64();
    ck.kept_attributes.resize(kept);
    for (auto& j : ck.kept_attributes) j = r.u64();
    ck.kept_attribute_names.resize(kept);
    for (auto& n : ck.kept_attribute_names) n = r.str();
    const std::uint64_t nm = r.u64();
    if (nm != a.input_channels) {
        throw FormatError(r.name + ": channel mean count does not match input channels");
    }
    ck.means.resize(nm);
    for (auto& m : ck.means) m = r.f64();

    ck.model.w1 = r.param_set();
    ck.model.w21 = r.param_set();
    ck.model.w22 = r.param_set();
    ck.opt1 = r.opt_state();
    ck.opt2 = r.opt_state();

    if (r.is.peek() != std::ifstream::traits_type::eof()) {
        throw FormatError(r.name + ": trailing bytes after checkpoint payload");
    }

    check_param_set(r.name, "w1", ck.model.w1, expected_shapes(a.feature_specs()));
    check_param_set(r.name, "w21", ck.model.w21, expected_shapes(a.attribute_specs(ck.model.T)));
    check_param_set(r.name, "w22", ck.model.w22,
                    expected_shapes(a.identity_specs(ck.model.C, ck.model.fusion_width())));
    ck.model.validate();
    auto params = qualified_params(ck.model);
    check_opt_state(r.name, ck.opt1, params);
    check_opt_state(r.name, ck.opt2, params);
    if (ck.kept_attributes.size() != ck.model.T) {
        throw FormatError(r.name + ": kept attribute count does not match model T");
    }
    return ck;
}

}  // namespace facefuse
