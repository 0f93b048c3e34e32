#include <gtest/gtest.h>

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "lra/data.hpp"

using lra::Dataset;
using lra::Matrix;

namespace {

namespace fs = std::filesystem;

std::string fixture_dir() {
    const auto d = fs::temp_directory_path() / "lra_data_fixtures";
    fs::create_directories(d);
    return d.string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(x >> 24);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back(x & 0xff);
}

/// 2 images of 2x2 with bytes [0,255,0,255 | 255,0,255,0], labels [3,7].
std::pair<std::string, std::string> small_fixture() {
    std::vector<unsigned char> img;
    push_u32(img, 0x00000803);
    push_u32(img, 2);
    push_u32(img, 2);
    push_u32(img, 2);
    for (unsigned char b : {0, 255, 0, 255, 255, 0, 255, 0}) img.push_back(b);
    std::vector<unsigned char> lbl;
    push_u32(lbl, 0x00000801);
    push_u32(lbl, 2);
    lbl.push_back(3);
    lbl.push_back(7);
    const std::string ip = fixture_dir() + "/small-images-idx3-ubyte";
    const std::string lp = fixture_dir() + "/small-labels-idx1-ubyte";
    write_bytes(ip, img);
    write_bytes(lp, lbl);
    return {ip, lp};
}

std::string gzip_copy(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const std::string out = path + ".gz";
    gzFile gz = gzopen(out.c_str(), "wb");
    gzwrite(gz, content.data(), static_cast<unsigned>(content.size()));
    gzclose(gz);
    return out;
}

std::string mnist_dir() {
    if (const char* env = std::getenv("LRA_MNIST_DIR")) return env;
    return std::string(LRA_SOURCE_DIR) + "/data/mnist";
}

}  // namespace

TEST(LoadIdx, SmallFixtureDecodesExactly) {
    auto [ip, lp] = small_fixture();
    Dataset ds = lra::load_idx(ip, lp);
    ASSERT_EQ(ds.size(), 2u);
    ASSERT_EQ(ds.images.cols(), 4u);
    EXPECT_EQ(ds.images.row(0)[0], 0.0);
    EXPECT_EQ(ds.images.row(0)[1], 1.0);
    EXPECT_EQ(ds.images.row(0)[2], 0.0);
    EXPECT_EQ(ds.images.row(0)[3], 1.0);
    EXPECT_EQ(ds.images.row(1)[0], 1.0);
    EXPECT_EQ(ds.images.row(1)[1], 0.0);
    EXPECT_EQ(ds.labels[0], 3);
    EXPECT_EQ(ds.labels[1], 7);
    EXPECT_EQ(ds.one_hot(0, 3), 1.0);
    EXPECT_EQ(ds.one_hot(1, 7), 1.0);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
        s0 += ds.one_hot(0, j);
        s1 += ds.one_hot(1, j);
    }
    EXPECT_EQ(s0, 1.0);
    EXPECT_EQ(s1, 1.0);
}

TEST(LoadIdx, GzippedInputAcceptedTransparently) {
    auto [ip, lp] = small_fixture();
    Dataset plain = lra::load_idx(ip, lp);
    Dataset zipped = lra::load_idx(gzip_copy(ip), gzip_copy(lp));
    EXPECT_EQ(plain.images, zipped.images);
    EXPECT_EQ(plain.labels, zipped.labels);
}

TEST(LoadIdx, BadMagicRejected) {
    auto [ip, lp] = small_fixture();
    std::vector<unsigned char> bad;
    push_u32(bad, 0x00000802);
    push_u32(bad, 0);
    const std::string bp = fixture_dir() + "/bad-magic";
    write_bytes(bp, bad);
    EXPECT_THROW(lra::load_idx(bp, lp), lra::FormatError);
}

TEST(LoadIdx, TruncatedPayloadRejected) {
    std::vector<unsigned char> img;
    push_u32(img, 0x00000803);
    push_u32(img, 2);
    push_u32(img, 2);
    push_u32(img, 2);
    img.push_back(1);  // 1 of 8 payload bytes
    const std::string ip = fixture_dir() + "/truncated-images";
    write_bytes(ip, img);
    auto [_, lp] = small_fixture();
    try {
        lra::load_idx(ip, lp);
        FAIL() << "expected FormatError";
    } catch (const lra::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }
}

TEST(LoadIdx, CountMismatchRejected) {
    auto [ip, lp] = small_fixture();
    std::vector<unsigned char> lbl;
    push_u32(lbl, 0x00000801);
    push_u32(lbl, 3);
    lbl.insert(lbl.end(), {1, 2, 3});
    const std::string lp3 = fixture_dir() + "/three-labels";
    write_bytes(lp3, lbl);
    EXPECT_THROW(lra::load_idx(ip, lp3), lra::FormatError);
}

TEST(Split, SizesAndDisjointness) {
    auto [ip, lp] = small_fixture();
    Dataset ds = lra::load_idx(ip, lp);
    auto [train, valid] = lra::split(ds, {1, 42});
    EXPECT_EQ(train.size(), 1u);
    EXPECT_EQ(valid.size(), 1u);
    EXPECT_NE(train.labels[0], valid.labels[0]);  // labels 3 and 7 are distinct
}

TEST(Split, ZeroValidationKeepsEverything) {
    auto [ip, lp] = small_fixture();
    Dataset ds = lra::load_idx(ip, lp);
    auto [train, valid] = lra::split(ds, {0, 1});
    EXPECT_EQ(train.size(), 2u);
    EXPECT_EQ(valid.size(), 0u);
    EXPECT_EQ(train.images, ds.images);
}

TEST(Split, OversizedValidationRejected) {
    auto [ip, lp] = small_fixture();
    Dataset ds = lra::load_idx(ip, lp);
    EXPECT_THROW(lra::split(ds, {2, 1}), lra::ArgumentError);
}

TEST(Split, DeterministicAndDisjointOverManySeeds) {
    Dataset ds;
    const std::size_t n = 64;
    ds.images = Matrix(n, 2);
    ds.one_hot = Matrix(n, 10);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.images(i, 0) = static_cast<double>(i);  // row identity tag
        ds.labels[i] = static_cast<int>(i % 10);
        ds.one_hot(i, i % 10) = 1.0;
    }
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [t1, v1] = lra::split(ds, {16, seed});
        auto [t2, v2] = lra::split(ds, {16, seed});
        EXPECT_EQ(v1.images, v2.images);
        EXPECT_EQ(t1.images, t2.images);
        std::set<double> seen;
        for (std::size_t i = 0; i < t1.size(); ++i) seen.insert(t1.images(i, 0));
        for (std::size_t i = 0; i < v1.size(); ++i) {
            EXPECT_FALSE(seen.count(v1.images(i, 0)));
            seen.insert(v1.images(i, 0));
        }
        EXPECT_EQ(seen.size(), n);
    }
}

TEST(Minibatches, ExactBatchCountAndSizes) {
    lra::BatchPlan plan(100, 50, std::nullopt);
    ASSERT_EQ(plan.count(), 2u);
    EXPECT_EQ(plan.indices(0).size(), 50u);
    EXPECT_EQ(plan.indices(1).size(), 50u);
}

TEST(Minibatches, RemainderBatch) {
    lra::BatchPlan plan(101, 50, std::nullopt);
    ASSERT_EQ(plan.count(), 3u);
    EXPECT_EQ(plan.indices(2).size(), 1u);
}

TEST(Minibatches, NoShuffleKeepsFileOrder) {
    lra::BatchPlan plan(7, 3, std::nullopt);
    std::vector<std::size_t> all;
    for (std::size_t b = 0; b < plan.count(); ++b)
        for (std::size_t i : plan.indices(b)) all.push_back(i);
    std::vector<std::size_t> want(7);
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
}

TEST(Minibatches, EpochCoversEverySampleExactlyOnce) {
    lra::BatchPlan plan(97, 10, 123u);
    std::vector<std::size_t> all;
    for (std::size_t b = 0; b < plan.count(); ++b)
        for (std::size_t i : plan.indices(b)) all.push_back(i);
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(97);
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
}

TEST(Minibatches, ShuffleReproducibleUnderSeed) {
    lra::BatchPlan a(50, 7, 9u), b(50, 7, 9u);
    for (std::size_t i = 0; i < a.count(); ++i) EXPECT_EQ(a.indices(i), b.indices(i));
}

TEST(RealMnist, TrainAndTestCounts) {
    const std::string dir = mnist_dir();
    if (!fs::exists(dir + "/train-images-idx3-ubyte.gz")) GTEST_SKIP() << "MNIST not present";
    Dataset train =
        lra::load_idx(dir + "/train-images-idx3-ubyte.gz", dir + "/train-labels-idx1-ubyte.gz");
    Dataset test =
        lra::load_idx(dir + "/t10k-images-idx3-ubyte.gz", dir + "/t10k-labels-idx1-ubyte.gz");
    EXPECT_EQ(train.size(), 60000u);
    EXPECT_EQ(test.size(), 10000u);
    EXPECT_EQ(train.images.cols(), 784u);
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < test.images.size(); ++i) {
        lo = std::min(lo, test.images.data()[i]);
        hi = std::max(hi, test.images.data()[i]);
    }
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
}
