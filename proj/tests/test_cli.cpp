#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mr2/binary_io.hpp"
#include "mr2/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "mr2");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = mr2::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class CliFiles : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("mr2_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "spec.cfg") << "num_classes = 3\ninput_dim = 4\nsamples_per_class = 12\nseed = 1\n";
        std::ofstream(dir / "train.cfg") << "objective = mr2\nepochs = 2\nbatch_size = 12\nhidden_dim = 6\n"
                                            "feature_dim = 3\nlambda = 0.1\n";
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string p(const char* name) const { return (dir / name).string(); }

    fs::path dir;
};

}  // namespace

TEST(Cli, GammaExample) {
    const Outcome o = run({"gamma", "--alpha", "1,8", "--cbar", "1"});
    EXPECT_EQ(o.code, 0);
    EXPECT_EQ(o.out, "class_id,alpha,gamma\n0,1,0.6666666667\n1,8,1.333333333\n");
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"train", "--data", "x"}).code, 1);
    EXPECT_EQ(run({"gamma"}).code, 1);
    EXPECT_EQ(run({"gamma", "--alpha", "1,2", "--bogus", "3"}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    const Outcome missing = run({"eval", "--data", "x"});
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.err.find("--checkpoint"), std::string::npos);
    EXPECT_TRUE(missing.out.empty());
    EXPECT_EQ(run({"gamma", "--alpha", "1,-2"}).code, 1);
}

TEST(Cli, GradcheckSelfTest) {
    const Outcome o = run({"gradcheck", "--instances", "5"});
    EXPECT_EQ(o.code, 0);
    EXPECT_EQ(o.out, run({"gradcheck", "--instances", "5"}).out);
    EXPECT_NE(o.out.find("combined_objective,4,"), std::string::npos);
}

TEST_F(CliFiles, PipelineIsByteIdentical) {
    ASSERT_EQ(run({"synth", "--spec", p("spec.cfg"), "--out", p("data")}).code, 0);
    const std::string train = p("data/train.mr2d"), test = p("data/test.mr2d");
    ASSERT_EQ(run({"train", "--config", p("train.cfg"), "--data", train, "--test", test, "--out", p("a")}).code, 0);
    ASSERT_EQ(run({"train", "--config", p("train.cfg"), "--data", train, "--test", test, "--out", p("b")}).code, 0);
    EXPECT_EQ(mr2::io::read_file(dir / "a/checkpoint.mr2c"), mr2::io::read_file(dir / "b/checkpoint.mr2c"));
    EXPECT_EQ(mr2::io::read_file(dir / "a/train_log.csv"), mr2::io::read_file(dir / "b/train_log.csv"));

    const std::string ck = p("a/checkpoint.mr2c");
    const Outcome e1 = run({"eval", "--checkpoint", ck, "--data", test});
    EXPECT_EQ(e1.code, 0);
    EXPECT_EQ(e1.out, run({"eval", "--checkpoint", ck, "--data", test}).out);
    EXPECT_NE(e1.out.find("class_id,acc,mean_norm,spread,subset"), std::string::npos);

    const Outcome b1 = run({"bounds", "--checkpoint", ck, "--data", test, "--draws", "64", "--seed", "3"});
    EXPECT_EQ(b1.code, 0);
    EXPECT_EQ(b1.out, run({"bounds", "--checkpoint", ck, "--data", test, "--draws", "64", "--seed", "3"}).out);
    EXPECT_EQ(run({"bounds", "--checkpoint", ck, "--data", test, "--draws", "64", "--p", "inf"}).code, 0);
    EXPECT_EQ(run({"gamma", "--stats", ck}).code, 0);

    ASSERT_EQ(run({"synth", "--spec", p("spec.cfg"), "--out", p("data2")}).code, 0);
    EXPECT_EQ(mr2::io::read_file(dir / "data/train.mr2d"), mr2::io::read_file(dir / "data2/train.mr2d"));
}

TEST_F(CliFiles, DataErrorsAndNoPartialOutput) {
    std::ofstream(dir / "junk.mr2d") << "not a dataset";
    const Outcome o = run({"train", "--config", p("train.cfg"), "--data", p("junk.mr2d"), "--out", p("out")});
    EXPECT_EQ(o.code, 2);
    EXPECT_FALSE(fs::exists(dir / "out/checkpoint.mr2c"));
    EXPECT_EQ(run({"eval", "--checkpoint", p("missing.mr2c"), "--data", p("junk.mr2d")}).code, 2);
}
