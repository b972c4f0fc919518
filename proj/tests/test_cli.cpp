#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "superpose/superpose.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const std::string& stdin_text = "") {
  const auto dir = fs::temp_directory_path() / "superpose_cli";
  fs::create_directories(dir);
  const auto in = (dir / "stdin.txt").string();
  std::ofstream(in) << stdin_text;
  const std::string cmd = std::string(SUPERPOSE_CLI) + " " + args + " < " + in + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / "superpose_cli" / name).string(); }

void write(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream(path) << text;
}

}  // namespace

TEST(Cli, CompileRunVerifyProfile) {
  const auto circuit = tmp("c.txt");
  const auto net = tmp("c.spn");
  write(circuit, "m=6\nand 0 1\nand 2 3\nand 4 5\n");
  fs::remove(net);
  ASSERT_EQ(cli("compile " + circuit + " --alpha 256 --beta 4 --seed 1 --out " + net).code, 0);
  EXPECT_TRUE(fs::exists(net));
  EXPECT_TRUE(fs::exists(net + ".report.json"));

  const auto run = cli("run " + net, "0 1\n2 3 4\n4 5\n\n9\n1 x\n");
  EXPECT_EQ(run.code, 1);
  EXPECT_EQ(run.out,
            "0\n"
            "error: TooManyActive: 3 active inputs exceed vmax=2\n"
            "2\n"
            "\n"
            "error: IndexOutOfRange: input 9 out of range\n"
            "error: SyntaxError: bad index 'x'\n");
  EXPECT_EQ(cli("run " + net, "0 1\n").code, 0);

  const auto verify = cli("verify " + net + " --exhaustive");
  EXPECT_EQ(verify.code, 0);
  const auto report = nlohmann::json::parse(verify.out);
  EXPECT_TRUE(report.at("pass").get<bool>());

  const auto profile = cli("profile " + net);
  EXPECT_EQ(profile.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(profile.out).at("within_margins").get<bool>());
}

TEST(Cli, FailedCompileWritesReportOnly) {
  const auto circuit = tmp("f.txt");
  const auto net = tmp("f.spn");
  write(circuit, "m=6\nand 0 1\nand 2 3\nand 4 5\n");
  fs::remove(net);
  fs::remove(net + ".report.json");
  EXPECT_EQ(cli("compile " + circuit + " --beta 0 --max-restarts 2 --out " + net).code, 2);
  EXPECT_FALSE(fs::exists(net));
  EXPECT_TRUE(fs::exists(net + ".report.json"));
}

TEST(Cli, SeedFromEnvironmentMatchesFlag) {
  const auto circuit = tmp("s.txt");
  write(circuit, "m=4\nand 0 1\nand 2 3\n");
  ASSERT_EQ(cli("compile " + circuit + " --alpha 256 --beta 4 --seed 7 --out " + tmp("flag.spn")).code, 0);
  ASSERT_EQ(cli("compile " + circuit + " --alpha 256 --beta 4 --out " + tmp("env.spn")).code, 0);
  const auto read = [](const std::string& p) { return superpose::read_file(p); };
  EXPECT_NE(read(tmp("flag.spn")), read(tmp("env.spn")));
  setenv("SUPERPOSE_SEED", "7", 1);
  ASSERT_EQ(cli("compile " + circuit + " --alpha 256 --beta 4 --out " + tmp("env.spn")).code, 0);
  unsetenv("SUPERPOSE_SEED");
  EXPECT_EQ(read(tmp("flag.spn")), read(tmp("env.spn")));
}

TEST(Cli, GenerateAndBadInput) {
  const auto g = cli("generate chain --m 6 --depth 2 --seed 3");
  EXPECT_EQ(g.code, 0);
  EXPECT_EQ(superpose::parse_chain(g.out).size(), 2u);
  EXPECT_EQ(cli("generate nonsense").code, 1);
  EXPECT_EQ(cli("run " + tmp("missing.spn")).code, 1);
  const auto bad = tmp("bad.txt");
  write(bad, "m=2\nand 0 5\n");
  EXPECT_EQ(cli("compile " + bad + " --out " + tmp("bad.spn")).code, 1);
}

TEST(Cli, SweepWritesCsv) {
  const auto s = cli("sweep --mprimes 4 --alphas 256 --seeds 1 --beta 4 --max-restarts 1");
  EXPECT_EQ(s.code, 0);
  EXPECT_EQ(s.out.substr(0, s.out.find('\n')), superpose::kSweepHeader);
}
