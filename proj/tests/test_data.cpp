#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "facefuse/dataset.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// 1x2x2 image with float-exact pixel values in [0,1].
Tensor quad(Real a, Real b, Real c, Real d) { return Tensor({1, 2, 2}, {a, b, c, d}); }

// Two identities, two samples each, one attribute column.
fs::path write_basic_manifest(const fs::path& dir) {
    write_tensor(dir / "a0.tnsr", quad(0.0, 0.25, 0.5, 0.75));
    write_tensor(dir / "a1.tnsr", quad(0.125, 0.25, 0.375, 0.5));
    write_tensor(dir / "b0.tnsr", quad(1.0, 0.75, 0.5, 0.25));
    write_tensor(dir / "b1.tnsr", quad(0.875, 0.75, 0.625, 0.5));
    write_text(dir / "manifest.csv",
               "# shape 1 2 2\n"
               "path,identity,attr:glasses\n"
               "a0.tnsr,0,1\n"
               "a1.tnsr,0,1\n"
               "b0.tnsr,1,0\n"
               "b1.tnsr,1,0\n");
    return dir / "manifest.csv";
}

}  // namespace

TEST_CASE("tensor files round trip bitwise") {
    fs::path dir = fresh_dir("data_tmp_tnsr");
    Tensor t({2, 3}, {0.0, 0.125, 0.25, 0.5, 0.75, 1.0});
    write_tensor(dir / "t.tnsr", t);
    Tensor back = read_tensor(dir / "t.tnsr");
    CHECK(bitwise_equal(t, back));

    Tensor s = Tensor::scalar(0.5);
    write_tensor(dir / "s.tnsr", s);
    CHECK(bitwise_equal(s, read_tensor(dir / "s.tnsr")));
    CHECK(read_tensor(dir / "s.tnsr").rank() == 1);

    SUBCASE("rank 0 is refused on write") {
        CHECK_THROWS_AS(write_tensor(dir / "r0.tnsr", Tensor()), FormatError);
    }

    SUBCASE("bad magic") {
        std::string bytes = read_bytes(dir / "t.tnsr");
        bytes[0] = 'X';
        write_text(dir / "bad.tnsr", bytes);
        CHECK_THROWS_AS(read_tensor(dir / "bad.tnsr"), FormatError);
    }

    SUBCASE("truncated payload") {
        std::string bytes = read_bytes(dir / "t.tnsr");
        write_text(dir / "cut.tnsr", bytes.substr(0, bytes.size() - 5));
        CHECK_THROWS_AS(read_tensor(dir / "cut.tnsr"), FormatError);
    }

    SUBCASE("trailing bytes") {
        std::string bytes = read_bytes(dir / "t.tnsr") + "z";
        write_text(dir / "long.tnsr", bytes);
        CHECK_THROWS_AS(read_tensor(dir / "long.tnsr"), FormatError);
    }

    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_tensor(dir / "absent.tnsr"), IoError);
    }

    fs::remove_all(dir);
}

TEST_CASE("hashing and seed mixing") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
    CHECK(hex64(0x1ull) == "0000000000000001");

    CHECK(mix_seed(1, 0) == mix_seed(1, 0));
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
}

TEST_CASE("deterministic shuffle") {
    std::vector<std::size_t> v(20);
    for (std::size_t i = 0; i < 20; ++i) v[i] = i;
    std::vector<std::size_t> a = v, b = v, c = v;

    std::mt19937_64 r1(5), r2(5), r3(6);
    deterministic_shuffle(a, r1);
    deterministic_shuffle(b, r2);
    deterministic_shuffle(c, r3);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a != v);

    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
}

TEST_CASE("manifest loading") {
    fs::path dir = fresh_dir("data_tmp_manifest");
    fs::path manifest = write_basic_manifest(dir);

    Dataset d = load_dataset(manifest);
    CHECK(d.size() == 4);
    CHECK(d.image_shape == Shape{1, 2, 2});
    CHECK(d.attribute_names == std::vector<std::string>{"glasses"});
    CHECK(d.identities == std::vector<int>{0, 0, 1, 1});
    CHECK(d.attributes[0] == std::vector<int>{1});
    CHECK(d.attributes[2] == std::vector<int>{0});
    CHECK(d.identity_count() == 2);
    CHECK(d.fingerprint != 0);
    CHECK(d.images[0][1] == doctest::Approx(0.25));

    SUBCASE("fingerprint tracks the manifest bytes") {
        write_text(dir / "m2.csv", read_bytes(manifest) + "\n");
        // Extra blank line parses identically but hashes differently.
        Dataset d2 = load_dataset(dir / "m2.csv");
        CHECK(d2.size() == 4);
        CHECK(d2.fingerprint != d.fingerprint);
    }

    SUBCASE("exact duplicate rows are allowed") {
        write_text(dir / "dup.csv",
                   "# shape 1 2 2\npath,identity,attr:glasses\n"
                   "a0.tnsr,0,1\na0.tnsr,0,1\nb0.tnsr,1,0\nb1.tnsr,1,0\n");
        CHECK(load_dataset(dir / "dup.csv").size() == 4);
    }

    fs::remove_all(dir);
}

TEST_CASE("manifest validation errors carry line numbers") {
    fs::path dir = fresh_dir("data_tmp_badmanifest");
    write_basic_manifest(dir);

    auto expect_data_error = [&](const std::string& text, const std::string& needle) {
        write_text(dir / "bad.csv", text);
        try {
            load_dataset(dir / "bad.csv");
            CHECK(false);
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    SUBCASE("missing shape line") {
        expect_data_error("path,identity\na0.tnsr,0\n", "# shape");
    }

    SUBCASE("attribute value must be a bit") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\na1.tnsr,0,2\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            ":4:");
    }

    SUBCASE("conflicting duplicate path") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\na0.tnsr,0,0\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            "conflicts with line 3");
    }

    SUBCASE("negative identity") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,-1,1\na1.tnsr,0,1\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            "non-negative");
    }

    SUBCASE("missing image file") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\nghost.tnsr,0,1\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            ":4:");
    }

    SUBCASE("shape mismatch against the declaration") {
        expect_data_error(
            "# shape 1 4 4\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\na1.tnsr,0,1\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            "does not match declared");
    }

    SUBCASE("identity ids must be contiguous") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\na1.tnsr,0,1\nb0.tnsr,2,0\nb1.tnsr,2,0\n",
            "contiguous");
    }

    SUBCASE("identities need two samples") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\na1.tnsr,0,1\nb0.tnsr,1,0\n",
            "single sample");
    }

    SUBCASE("pixels outside [0,1]") {
        Tensor hot = quad(0.5, 0.5, 0.5, 0.5);
        hot[2] = 1.5;
        write_tensor(dir / "hot.tnsr", hot);
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:glasses\n"
            "a0.tnsr,0,1\nhot.tnsr,0,1\nb0.tnsr,1,0\nb1.tnsr,1,0\n",
            "outside [0,1]");
    }

    SUBCASE("duplicate attribute column") {
        expect_data_error(
            "# shape 1 2 2\npath,identity,attr:x,attr:x\n"
            "a0.tnsr,0,1,1\na1.tnsr,0,1,1\nb0.tnsr,1,0,0\nb1.tnsr,1,0,0\n",
            "duplicate attribute");
    }

    fs::remove_all(dir);
}

TEST_CASE("per-identity split") {
    fs::path dir = fresh_dir("data_tmp_split");
    SynthSpec spec;
    spec.num_identities = 4;
    spec.images_per_identity = 10;
    spec.channels = 1;
    spec.image_size = 4;
    spec.confusable_pairs = 0;
    auto gt = gen_synthetic(spec, 3, dir);
    Dataset d = load_dataset(gt.manifest);

    auto [train, test] = split_per_identity(d, 0.8, 1);
    CHECK(train.size() == 32);
    CHECK(test.size() == 8);

    SUBCASE("partition covers every sample exactly once") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto [tr, te] = split_per_identity(d, 0.8, seed);
            std::vector<std::size_t> all = tr;
            all.insert(all.end(), te.begin(), te.end());
            std::sort(all.begin(), all.end());
            std::vector<std::size_t> want(d.size());
            for (std::size_t i = 0; i < d.size(); ++i) want[i] = i;
            CHECK(all == want);
        }
    }

    SUBCASE("per-identity counts hold for each side") {
        std::vector<std::size_t> per_id(4, 0);
        for (std::size_t idx : train) per_id[static_cast<std::size_t>(d.identities[idx])] += 1;
        for (std::size_t c : per_id) CHECK(c == 8);
    }

    SUBCASE("seed is the only source of variation") {
        auto [a_tr, a_te] = split_per_identity(d, 0.8, 9);
        auto [b_tr, b_te] = split_per_identity(d, 0.8, 9);
        auto [c_tr, c_te] = split_per_identity(d, 0.8, 10);
        CHECK(a_tr == b_tr);
        CHECK(a_te == b_te);
        CHECK(a_tr != c_tr);
    }

    SUBCASE("two samples split one and one") {
        Dataset two;
        two.image_shape = {1, 1, 1};
        two.images = {Tensor({1, 1, 1}, {0.1}), Tensor({1, 1, 1}, {0.2}),
                      Tensor({1, 1, 1}, {0.3}), Tensor({1, 1, 1}, {0.4})};
        two.identities = {0, 0, 1, 1};
        two.attributes = {{}, {}, {}, {}};
        auto [tr, te] = split_per_identity(two, 0.9, 1);
        CHECK(tr.size() == 2);  // floor(0.9*2) = 1 per identity, one held out
        CHECK(te.size() == 2);
    }

    SUBCASE("degenerate inputs are rejected") {
        CHECK_THROWS_AS(split_per_identity(d, 0.0, 1), ConfigError);
        CHECK_THROWS_AS(split_per_identity(d, 1.0, 1), ConfigError);

        Dataset lone;
        lone.image_shape = {1, 1, 1};
        lone.images = {Tensor({1, 1, 1}, {0.1}), Tensor({1, 1, 1}, {0.2}),
                       Tensor({1, 1, 1}, {0.3})};
        lone.identities = {0, 0, 1};
        lone.attributes = {{}, {}, {}};
        CHECK_THROWS_AS(split_per_identity(lone, 0.5, 1), DataError);
    }

    fs::remove_all(dir);
}

TEST_CASE("identity-attribute filter") {
    Dataset d;
    d.image_shape = {1, 1, 1};
    d.attribute_names = {"stable", "flaky", "global"};
    for (int i = 0; i < 6; ++i) d.images.push_back(Tensor({1, 1, 1}, {0.5}));
    d.identities = {0, 0, 0, 1, 1, 1};
    d.attributes = {{1, 0, 1}, {1, 1, 1}, {1, 0, 1}, {0, 0, 1}, {0, 0, 1}, {0, 1, 1}};

    std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5};
    CHECK(filter_identity_attributes(d, all) == std::vector<std::size_t>{0, 2});

    SUBCASE("the subset decides what counts as constant") {
        std::vector<std::size_t> calm = {0, 2, 3, 4};  // drops both flaky samples
        CHECK(filter_identity_attributes(d, calm) == std::vector<std::size_t>{0, 1, 2});
    }

    SUBCASE("subset order does not matter") {
        std::vector<std::size_t> shuffled = {5, 0, 3, 1, 4, 2};
        CHECK(filter_identity_attributes(d, shuffled) == filter_identity_attributes(d, all));
    }
}

TEST_CASE("channel means and batch assembly") {
    Dataset d;
    d.image_shape = {2, 1, 2};
    d.attribute_names = {"a", "b"};
    d.images = {Tensor({2, 1, 2}, {0.0, 0.5, 1.0, 1.0}), Tensor({2, 1, 2}, {0.5, 1.0, 0.0, 0.0})};
    d.identities = {0, 1};
    d.attributes = {{1, 0}, {0, 1}};

    std::vector<Real> means = channel_means(d, {0, 1});
    CHECK(means.size() == 2);
    CHECK(means[0] == doctest::Approx(0.5));
    CHECK(means[1] == doctest::Approx(0.5));

    Batch b = make_batch(d, {1, 0}, means, {1});
    CHECK(b.images.shape() == Shape{2, 2, 1, 2});
    CHECK(b.identities == std::vector<int>{1, 0});
    CHECK(b.attributes.shape() == Shape{2, 1});
    CHECK(b.attributes(0, 0) == 1.0);
    CHECK(b.attributes(1, 0) == 0.0);
    CHECK(b.images(0, 0, 0, 0) == doctest::Approx(0.0));   // 0.5 - mean
    CHECK(b.images(1, 0, 0, 1) == doctest::Approx(0.0));   // 0.5 - mean
    CHECK(b.images(1, 1, 0, 0) == doctest::Approx(0.5));   // 1.0 - mean

    CHECK_THROWS_AS(make_batch(d, {}, means, {0}), DataError);
    CHECK_THROWS_AS(make_batch(d, {0}, {0.5}, {0}), DimensionError);
    CHECK_THROWS_AS(channel_means(d, {}), DataError);
}

TEST_CASE("synthetic generator") {
    fs::path dir = fresh_dir("data_tmp_synth");
    SynthSpec spec;
    spec.num_identities = 6;
    spec.images_per_identity = 20;
    spec.channels = 1;
    spec.image_size = 8;
    spec.confusable_pairs = 2;
    spec.transient_attributes = 1;
    spec.noise = 0.05;

    CHECK(spec.identity_attribute_count() == 3);
    auto gt = gen_synthetic(spec, 77, dir / "a");
    Dataset d = load_dataset(gt.manifest);

    CHECK(d.size() == 120);
    CHECK(d.identity_count() == 6);
    CHECK(d.attribute_names ==
          std::vector<std::string>{"code0", "code1", "code2", "transient0"});
    CHECK(gt.confusable_pairs == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});
    CHECK(fs::exists(dir / "a" / "meta.json"));

    SUBCASE("attribute bits are the identity code") {
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& code = gt.identity_attributes[static_cast<std::size_t>(d.identities[i])];
            for (std::size_t j = 0; j < 3; ++j) CHECK(d.attributes[i][j] == code[j]);
        }
        // Pair members differ exactly in bit 0.
        CHECK(gt.identity_attributes[0][0] != gt.identity_attributes[1][0]);
        CHECK(gt.identity_attributes[0][1] == gt.identity_attributes[1][1]);
        CHECK(gt.identity_attributes[2][0] != gt.identity_attributes[3][0]);
    }

    SUBCASE("same seed regenerates identical bytes") {
        auto gt2 = gen_synthetic(spec, 77, dir / "b");
        CHECK(read_bytes(gt.manifest) == read_bytes(gt2.manifest));
        CHECK(read_bytes(dir / "a" / "images" / "id3_7.tnsr") ==
              read_bytes(dir / "b" / "images" / "id3_7.tnsr"));
        auto gt3 = gen_synthetic(spec, 78, dir / "c");
        CHECK(read_bytes(dir / "a" / "images" / "id3_7.tnsr") !=
              read_bytes(dir / "c" / "images" / "id3_7.tnsr"));
    }

    SUBCASE("filter keeps the code columns and drops the transient one") {
        auto [train, test] = split_per_identity(d, 0.8, 1);
        CHECK(filter_identity_attributes(d, train) == std::vector<std::size_t>{0, 1, 2});
    }

    SUBCASE("paired identities are pixel twins") {
        auto mean_image = [&](int id) {
            std::vector<Real> acc(d.images[0].numel(), 0.0);
            std::size_t n = 0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (d.identities[i] != id) continue;
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += d.images[i][k];
                ++n;
            }
            for (Real& v : acc) v /= static_cast<Real>(n);
            return acc;
        };
        auto dist2 = [](const std::vector<Real>& a, const std::vector<Real>& b) {
            Real s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
            return s;
        };
        auto m0 = mean_image(0), m1 = mean_image(1), m4 = mean_image(4), m5 = mean_image(5);
        CHECK(dist2(m0, m1) < 0.1 * dist2(m0, m4));
        CHECK(dist2(m0, m1) < 0.1 * dist2(m4, m5));
    }

    SUBCASE("nearest centroid hits the confusability ceiling") {
        auto [train, test] = split_per_identity(d, 0.8, 1);
        oracles::NearestCentroid nc;
        nc.fit(d.images, d.identities, train, 6);

        std::vector<std::size_t> paired, unpaired;
        for (std::size_t idx : test) {
            (d.identities[idx] < 4 ? paired : unpaired).push_back(idx);
        }
        CHECK(unpaired.size() == 8);
        CHECK(paired.size() == 16);
        CHECK(nc.accuracy(d.images, d.identities, unpaired) >= 7.0 / 8.0);
        CHECK(nc.accuracy(d.images, d.identities, paired) <= 0.85);
        const Real overall = nc.accuracy(d.images, d.identities, test);
        CHECK(overall > 0.4);
        CHECK(overall < 0.9);
    }

    fs::remove_all(dir);
}

TEST_CASE("synth spec validation") {
    SynthSpec s;
    s.num_identities = 3;
    s.confusable_pairs = 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SynthSpec{};
    s.images_per_identity = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SynthSpec{};
    CHECK_NOTHROW(s.validate());
    s.num_identities = 2;
    CHECK(s.identity_attribute_count() == 1);
    s.num_identities = 9;
    CHECK(s.identity_attribute_count() == 4);
}
