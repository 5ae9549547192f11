#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>

#include <doctest.h>

#include "divreg/data.hpp"
#include "divreg/error.hpp"
#include "divreg/network.hpp"
#include "divreg/rng.hpp"

using namespace divreg;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "divreg_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

// 2 images of 2x2 pixels plus labels {1, 0}
std::vector<unsigned char> idx_image_fixture() {
    std::vector<unsigned char> bytes;
    push_u32_be(bytes, 0x00000803);
    push_u32_be(bytes, 2);
    push_u32_be(bytes, 2);
    push_u32_be(bytes, 2);
    for (unsigned char px : {0, 255, 128, 64, 255, 255, 0, 1}) bytes.push_back(px);
    return bytes;
}

std::vector<unsigned char> idx_label_fixture(std::uint32_t count = 2) {
    std::vector<unsigned char> bytes;
    push_u32_be(bytes, 0x00000801);
    push_u32_be(bytes, count);
    for (std::uint32_t i = 0; i < count; ++i) bytes.push_back(i == 0 ? 1 : 0);
    return bytes;
}

} // namespace

TEST_CASE("blobs are deterministic per seed") {
    Dataset a = gen_blobs(5, 3, 2, 1.0, 123);
    Dataset b = gen_blobs(5, 3, 2, 1.0, 123);
    Dataset c = gen_blobs(5, 3, 2, 1.0, 124);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(!(a.features == c.features));
    CHECK(a.size() == 15);
    CHECK(a.num_classes == 3);
}

TEST_CASE("blobs collapse onto their centers as spread goes to zero") {
    Dataset tiny = gen_blobs(4, 2, 3, 1e-300, 9);
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t d = 0; d < 3; ++d)
            CHECK(tiny.features(i, d) == doctest::Approx(tiny.features(0, d)).epsilon(1e-12));
}

TEST_CASE("well-separated blobs admit a nearest-class-mean classifier") {
    Dataset ds = gen_blobs(50, 2, 2, 0.1, 21);
    // class means as stand-ins for the true centers
    double mean[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        mean[ds.labels[i]][0] += ds.features(i, 0) / 50.0;
        mean[ds.labels[i]][1] += ds.features(i, 1) / 50.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double d0 = std::hypot(ds.features(i, 0) - mean[0][0], ds.features(i, 1) - mean[0][1]);
        double d1 = std::hypot(ds.features(i, 0) - mean[1][0], ds.features(i, 1) - mean[1][1]);
        correct += (d0 < d1 ? 0 : 1) == ds.labels[i];
    }
    CHECK(correct == ds.size());
}

TEST_CASE("noise-free moons lie exactly on the two unit half-circles") {
    Dataset ds = gen_two_moons(200, 0.0, 5);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double x = ds.features(i, 0), y = ds.features(i, 1);
        double radius = ds.labels[i] == 0 ? std::hypot(x, y) : std::hypot(x - 1.0, y - 0.5);
        CHECK(radius == doctest::Approx(1.0).epsilon(1e-12));
    }
    Dataset again = gen_two_moons(200, 0.0, 5);
    CHECK(ds.features == again.features);
}

TEST_CASE("an mlp oracle reaches 97% on gentle moons") {
    Dataset ds = gen_two_moons(2000, 0.1, 11);
    Split parts = split(ds, {0.7, 0.0, 0.3}, 77);
    RegularizerSpec none;
    none.variant = RegVariant::None;
    Rng rng(mix_seed(1, 0x1217));
    Mlp model({{2, 16, Activation::ReLU}, {16, 16, Activation::ReLU}, {16, 2, Activation::Identity}},
              rng);
    OptimizerState opt;
    opt.learning_rate = 0.1;
    for (std::size_t epoch = 0; epoch < 40; ++epoch)
        train_epoch(model, parts.train, none, opt, 1, epoch, {32, false});
    CHECK(evaluate_error_pct(model, parts.test) <= 3.0);
}

TEST_CASE("idx loader round-trips the fixture exactly") {
    auto img_path = temp_file("fixture-images-idx3");
    auto lab_path = temp_file("fixture-labels-idx1");
    write_bytes(img_path, idx_image_fixture());
    write_bytes(lab_path, idx_label_fixture());

    Dataset ds = load_idx(img_path.string(), lab_path.string());
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 4);
    CHECK(ds.features(0, 0) == 0.0);
    CHECK(ds.features(0, 1) == 1.0); // byte 255 -> exactly 1.0
    CHECK(ds.features(0, 2) == 128.0 / 255.0);
    CHECK(ds.features(0, 3) == 64.0 / 255.0);
    CHECK(ds.features(1, 0) == 1.0);
    CHECK(ds.features(1, 3) == 1.0 / 255.0);
    CHECK(ds.labels == std::vector<int>{1, 0});
    CHECK(ds.num_classes == 2);
}

TEST_CASE("idx loader rejects malformed files") {
    auto img_path = temp_file("bad-images");
    auto lab_path = temp_file("bad-labels");

    // wrong magic in the labels file
    write_bytes(img_path, idx_image_fixture());
    auto bad_label = idx_label_fixture();
    bad_label[3] = 0x99;
    write_bytes(lab_path, bad_label);
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), BadMagic);

    // wrong magic in the images file
    auto bad_image = idx_image_fixture();
    bad_image[3] = 0x01;
    write_bytes(img_path, bad_image);
    write_bytes(lab_path, idx_label_fixture());
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), BadMagic);

    // truncated mid-pixel-block
    auto truncated = idx_image_fixture();
    truncated.resize(truncated.size() - 3);
    write_bytes(img_path, truncated);
    write_bytes(lab_path, idx_label_fixture());
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), TruncatedFile);

    // image/label count mismatch
    write_bytes(img_path, idx_image_fixture());
    write_bytes(lab_path, idx_label_fixture(3));
    CHECK_THROWS_AS(load_idx(img_path.string(), lab_path.string()), CountMismatch);
}

TEST_CASE("csv loader parses a small fixture") {
    auto path = temp_file("small.csv");
    std::ofstream(path) << "x,y,label\n0.5,1.5,0\n-1.25,2.0,1\n3,4,2\n";
    Dataset ds = load_csv(path.string(), 2);
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.features(1, 0) == -1.25);
    CHECK(ds.labels == std::vector<int>{0, 1, 2});
    CHECK(ds.num_classes == 3);
}

TEST_CASE("csv loader failure modes") {
    auto empty = temp_file("empty.csv");
    std::ofstream(empty) << "";
    CHECK_THROWS_AS(load_csv(empty.string(), 0), ParseError);

    auto good = temp_file("ok.csv");
    std::ofstream(good) << "1,2,0\n3,4,1\n";
    CHECK_THROWS_WITH_AS(load_csv(good.string(), 7),
                         doctest::Contains("label column 7"), ParseError);

    auto fractional = temp_file("fractional.csv");
    std::ofstream(fractional) << "1,2,0.5\n";
    CHECK_THROWS_AS(load_csv(fractional.string(), 2), NonIntegerLabel);

    auto garbled = temp_file("garbled.csv");
    std::ofstream(garbled) << "1,2,0\nx,oops,1\n";
    try {
        load_csv(garbled.string(), 2);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        CHECK(std::string(e.what()).find("column 1") != std::string::npos);
    }
}

TEST_CASE("csv matrix reader skips comment lines") {
    auto path = temp_file("matrix.csv");
    std::ofstream(path) << "# det=1 logdet=0\n1,0.5\n0.5,1\n";
    Matrix m = load_csv_matrix(path.string());
    CHECK(m == Matrix::from_rows({{1, 0.5}, {0.5, 1}}));
}

TEST_CASE("split covers the source exactly and is seed-deterministic") {
    Dataset ds = gen_blobs(20, 3, 2, 1.0, 8);
    Split a = split(ds, {0.6, 0.2, 0.2}, 55);
    Split b = split(ds, {0.6, 0.2, 0.2}, 55);
    CHECK(a.train.features == b.train.features);
    CHECK(a.val.labels == b.val.labels);
    CHECK(a.train.size() == 36);
    CHECK(a.val.size() == 12);
    CHECK(a.test.size() == 12);

    // the union multiset of labels matches the source
    std::map<int, int> source_counts, split_counts;
    for (int label : ds.labels) ++source_counts[label];
    for (const Dataset* part : {&a.train, &a.val, &a.test})
        for (int label : part->labels) ++split_counts[label];
    CHECK(source_counts == split_counts);
}

TEST_CASE("degenerate fractions and validation") {
    Dataset ds = gen_blobs(10, 2, 2, 1.0, 2);
    Split all_train = split(ds, {1.0, 0.0, 0.0}, 3);
    CHECK(all_train.train.size() == ds.size());
    CHECK(all_train.val.size() == 0);
    CHECK(all_train.test.size() == 0);
    std::map<int, int> source_counts, train_counts;
    for (int label : ds.labels) ++source_counts[label];
    for (int label : all_train.train.labels) ++train_counts[label];
    CHECK(source_counts == train_counts);

    CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 3), InvalidArgument);
    CHECK_THROWS_AS(split(ds, {1.2, -0.1, -0.1}, 3), InvalidArgument);
}

TEST_CASE("label noise flips exactly the requested count") {
    Dataset ds = gen_blobs(2500, 4, 2, 1.0, 14); // N = 10000
    Dataset clean = ds;

    Dataset untouched = inject_label_noise(ds, 0.0, 5);
    CHECK(untouched.labels == ds.labels);

    Dataset noisy = inject_label_noise(ds, 0.4, 5);
    CHECK(ds.labels == clean.labels); // original unmodified
    std::size_t changed = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        changed += noisy.labels[i] != ds.labels[i];
        CHECK(noisy.labels[i] >= 0);
        CHECK(noisy.labels[i] < ds.num_classes);
    }
    CHECK(changed == 4000);

    Dataset all_flipped = inject_label_noise(ds, 1.0, 6);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(all_flipped.labels[i] != ds.labels[i]);

    CHECK_THROWS_AS(inject_label_noise(ds, 1.5, 5), InvalidArgument);
    Dataset mono = ds;
    mono.num_classes = 1;
    for (int& l : mono.labels) l = 0;
    CHECK_THROWS_AS(inject_label_noise(mono, 0.2, 5), SingleClass);
}

TEST_CASE("batch stream covers every index once per epoch") {
    Dataset ds = gen_blobs(11, 3, 2, 1.0, 77); // N = 33, awkward batch sizes
    BatchStream stream(ds, 8, 42, 0);
    CHECK(stream.num_batches() == 5);

    std::map<double, int> seen; // feature fingerprint -> count
    std::size_t total = 0, batches = 0;
    std::size_t last_size = 0;
    while (auto batch = stream.next()) {
        ++batches;
        total += batch->labels.size();
        last_size = batch->labels.size();
        for (std::size_t i = 0; i < batch->labels.size(); ++i)
            ++seen[batch->features(i, 0) * 1e6 + batch->features(i, 1)];
    }
    CHECK(batches == 5);
    CHECK(total == 33);
    CHECK(last_size == 1); // final partial batch emitted
    for (const auto& [key, count] : seen) CHECK(count == 1);
}

TEST_CASE("batch stream order is a function of (seed, epoch)") {
    Dataset ds = gen_blobs(16, 2, 2, 1.0, 31);
    auto first_batch = [&](std::uint64_t seed, std::size_t epoch) {
        BatchStream stream(ds, 8, seed, epoch);
        return stream.next()->features;
    };
    CHECK(first_batch(9, 0) == first_batch(9, 0));
    CHECK(!(first_batch(9, 0) == first_batch(9, 1)));
    CHECK(!(first_batch(9, 0) == first_batch(10, 0)));

    // batch_size == N: one batch holding the whole (shuffled) set
    BatchStream whole(ds, ds.size(), 3, 0);
    auto batch = whole.next();
    CHECK(batch->labels.size() == ds.size());
    CHECK(!whole.next().has_value());
}
