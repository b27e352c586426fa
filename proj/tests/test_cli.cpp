// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs of the fudsa executable.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path& work_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("fudsa_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    static std::string doomed;
    doomed = p.string();
    std::atexit([] {
      std::error_code ec;
      fs::remove_all(doomed, ec);
    });
    return p;
  }();
  return root;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::string& args) {
  static int n = 0;
  const fs::path out = work_root() / ("stdout_" + std::to_string(n));
  const fs::path err = work_root() / ("stderr_" + std::to_string(n++));
  const std::string cmd = std::string("cd '") + work_root().string() + "' && '" + FUDSA_CLI_PATH + "' " + args +
                          " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> tree(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  const auto fa = tree(a);
  if (fa != tree(b)) return false;
  for (const auto& f : fa) {
    if (slurp(a / f) != slurp(b / f)) return false;
  }
  return true;
}

// Small shared dataset: 10 phantoms at 32x32, processed for L=3.
const fs::path& processed() {
  static const fs::path dir = [] {
    REQUIRE(cli("synth --out raw32 --count 10 --size 32 --levels 3 --seed 4").code == 0);
    REQUIRE(cli("preprocess --in raw32 --out proc32 --size 32 --seed 4").code == 0);
    return work_root() / "proc32";
  }();
  return dir;
}

const std::string kSmall = "--set levels=3 --set base_channels=4 --set size=32 --quiet";

}  // namespace

TEST_CASE("help lists every subcommand and the seed offsets") {
  const Run r = cli("--help");
  CHECK(r.code == 0);
  for (const char* s : {"synth", "preprocess", "train", "eval", "predict", "gradcheck", "seed+1000+k", "seed+3"}) {
    CHECK(r.out.find(s) != std::string::npos);
  }
  const Run g = cli("gradcheck --help");
  CHECK(g.code == 0);
  CHECK(g.out.find("--levels") != std::string::npos);
  CHECK(g.out.find("[3]") != std::string::npos);
  CHECK(g.out.find("[32]") != std::string::npos);
  CHECK(g.out.find("[f64]") != std::string::npos);
  const Run p = cli("preprocess --help");
  CHECK(p.out.find("[-1000]") != std::string::npos);
  CHECK(p.out.find("[170]") != std::string::npos);
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
}

TEST_CASE("synth writes count pairs, is byte-reproducible, validates size") {
  REQUIRE(cli("synth --out s_a --count 10 --size 64 --seed 9").code == 0);
  REQUIRE(cli("synth --out s_b --count 10 --size 64 --seed 9").code == 0);
  const fs::path a = work_root() / "s_a";
  CHECK(lines_of(slurp(a / "manifest.txt")).size() == 10);
  CHECK(std::distance(fs::directory_iterator(a / "images"), fs::directory_iterator{}) == 10);
  CHECK(std::distance(fs::directory_iterator(a / "masks"), fs::directory_iterator{}) == 10);
  CHECK(same_tree(a, work_root() / "s_b"));
  REQUIRE(cli("synth --out s_c --count 10 --size 64 --seed 10").code == 0);
  CHECK_FALSE(same_tree(a, work_root() / "s_c"));

  const Run bad = cli("synth --out s_bad --count 2 --size 60 --seed 1");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("divisible") != std::string::npos);

  std::ofstream(work_root() / "plainfile") << "x";
  CHECK(cli("synth --out plainfile/sub --count 1 --size 32 --seed 1").code == 2);
}

TEST_CASE("preprocess filters empty masks, echoes its config, splits reproducibly") {
  REQUIRE(cli("synth --out pp_raw --count 10 --size 32 --levels 3 --seed 2").code == 0);
  const fs::path raw = work_root() / "pp_raw";
  const auto ids = lines_of(slurp(raw / "manifest.txt"));
  REQUIRE(ids.size() == 10);
  for (int i = 0; i < 3; ++i) {
    std::ofstream m(raw / "masks" / (ids[static_cast<std::size_t>(i)] + ".pgm"), std::ios::binary);
    m << "P5\n32 32\n255\n" << std::string(32 * 32, '\0');
  }
  REQUIRE(cli("preprocess --in pp_raw --out pp_a --size 32 --seed 2").code == 0);
  REQUIRE(cli("preprocess --in pp_raw --out pp_b --size 32 --seed 2").code == 0);
  const fs::path a = work_root() / "pp_a";
  CHECK(std::distance(fs::directory_iterator(a / "images"), fs::directory_iterator{}) == 7);
  CHECK(slurp(a / "manifest.txt") == slurp(work_root() / "pp_b" / "manifest.txt"));
  CHECK(same_tree(a, work_root() / "pp_b"));
  const std::string echo = slurp(a / "preprocess.cfg");
  CHECK(echo.find("lo_hu=-1000\n") != std::string::npos);
  CHECK(echo.find("hi_hu=170\n") != std::string::npos);

  std::ofstream(raw / "images" / (ids[5] + ".pgm"), std::ios::binary) << "P2 garbage";
  const Run bad = cli("preprocess --in pp_raw --out pp_c --size 32 --seed 2");
  CHECK(bad.code == 2);
  CHECK(bad.err.find(ids[5]) != std::string::npos);
}

TEST_CASE("train writes four artifacts; reruns are byte-identical") {
  const fs::path data = processed();
  REQUIRE(cli("train --data proc32 --out t_a --epochs 3 " + kSmall).code == 0);
  REQUIRE(cli("train --data proc32 --out t_b --epochs 3 " + kSmall).code == 0);
  const fs::path a = work_root() / "t_a";
  for (const char* f : {"best.fud", "final.fud", "report.csv", "config.txt"}) CHECK(fs::exists(a / f));
  CHECK(same_tree(a, work_root() / "t_b"));
  const auto rows = lines_of(slurp(a / "report.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "epoch,train_loss,val_loss,val_dsc,val_iou,val_recall");
  CHECK(rows[1].rfind("1,", 0) == 0);
  CHECK(rows[4].rfind("# best_epoch=", 0) == 0);

  // The resolved config reproduces the run when fed back.
  REQUIRE(cli("train --data proc32 --config t_a/config.txt --out t_c --quiet").code == 0);
  CHECK(slurp(a / "report.csv") == slurp(work_root() / "t_c" / "report.csv"));

  // A different seed changes the curve.
  REQUIRE(cli("train --data proc32 --out t_d --epochs 3 --seed 7 " + kSmall).code == 0);
  CHECK(slurp(a / "report.csv") != slurp(work_root() / "t_d" / "report.csv"));
}

TEST_CASE("train variants, validation and divergence exit codes") {
  processed();
  REQUIRE(cli("train --data proc32 --out v2 --epochs 1 --variant II " + kSmall).code == 0);
  const std::string cfg = slurp(work_root() / "v2" / "config.txt");
  CHECK(cfg.find("deep_supervision=false") != std::string::npos);
  CHECK(cfg.find("variant=II") != std::string::npos);
  REQUIRE(cli("train --data proc32 --out v1 --epochs 1 --variant I " + kSmall).code == 0);
  CHECK(slurp(work_root() / "v1" / "config.txt").find("spatial_only=true") != std::string::npos);

  CHECK(cli("train --data proc32 --out v_bad --variant IV " + kSmall).code == 2);
  CHECK(cli("train --data proc32 --out v_bad --set nonsense=1 " + kSmall).code == 2);
  CHECK(cli("train --data raw32_missing --out v_bad " + kSmall).code == 2);
  fs::create_directories(work_root() / "no_manifest");
  CHECK(cli("train --data no_manifest --out v_bad " + kSmall).code == 2);
  // Config says 64, data is 32.
  CHECK(cli("train --data proc32 --out v_bad --set levels=3 --set base_channels=4 --quiet").code == 2);

  const Run div = cli("train --data proc32 --out v_div --epochs 3 --set learning_rate=1e30 " + kSmall);
  CHECK(div.code == 3);
  CHECK(div.err.find("non-finite") != std::string::npos);
}

TEST_CASE("eval prints the pooled metrics CSV and is pure") {
  processed();
  REQUIRE(cli("train --data proc32 --out e_run --epochs 2 " + kSmall).code == 0);
  const Run a = cli("eval --data proc32 --checkpoint e_run/best.fud --split val");
  const Run b = cli("eval --data proc32 --checkpoint e_run/best.fud --split val");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto rows = lines_of(a.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "split,n_images,tp,fp,fn,tn,dsc,iou,recall");
  CHECK(rows[1].rfind("val,2,", 0) == 0);
  const Run tr = cli("eval --data proc32 --checkpoint e_run/best.fud --split train");
  CHECK(lines_of(tr.out).at(1).rfind("train,8,", 0) == 0);

  // Incompatible resolution.
  REQUIRE(cli("synth --out raw64 --count 5 --size 64 --seed 1").code == 0);
  REQUIRE(cli("preprocess --in raw64 --out proc64 --size 64 --seed 1").code == 0);
  const Run inc = cli("eval --data proc64 --checkpoint e_run/best.fud --split all");
  CHECK(inc.code == 2);
  CHECK(inc.err.find("size 32") != std::string::npos);

  std::ofstream(work_root() / "junk.fud", std::ios::binary) << "nope";
  CHECK(cli("eval --data proc32 --checkpoint junk.fud").code == 2);
  CHECK(cli("eval --data proc32 --checkpoint missing.fud").code == 2);
}

TEST_CASE("predict writes a binary mask and 2(L-1) attention dumps, reproducibly") {
  processed();
  REQUIRE(cli("train --data proc32 --out p_run --epochs 2 " + kSmall).code == 0);
  const std::string id = lines_of(slurp(work_root() / "raw32" / "manifest.txt")).at(0);
  const std::string img = "raw32/images/" + id + ".pgm";
  REQUIRE(cli("predict --checkpoint p_run/best.fud --image " + img + " --out m1.pgm --dump-attention att").code == 0);
  REQUIRE(cli("predict --checkpoint p_run/best.fud --image " + img + " --out m2.pgm").code == 0);
  const std::string m1 = slurp(work_root() / "m1.pgm");
  CHECK(m1 == slurp(work_root() / "m2.pgm"));
  const std::string header = "P5\n32 32\n255\n";
  REQUIRE(m1.size() == header.size() + 32 * 32);
  CHECK(m1.substr(0, header.size()) == header);
  std::set<unsigned char> values(m1.begin() + static_cast<std::ptrdiff_t>(header.size()), m1.end());
  for (const unsigned char v : values) CHECK((v == 0 || v == 255));
  CHECK(tree(work_root() / "att").size() == 4);
  CHECK(fs::exists(work_root() / "att" / "att_l1_wcha.ften"));
  CHECK(fs::exists(work_root() / "att" / "att_l2_q.ften"));

  // Preprocessed tensors work too; bad extents do not.
  const std::string ften = "proc32/images/" + lines_of(slurp(work_root() / "proc32" / "manifest.txt")).at(2) + ".ften";
  CHECK(cli("predict --checkpoint p_run/best.fud --image " + ften + " --out m3.pgm").code == 0);
  {
    std::ofstream bad(work_root() / "odd.pgm", std::ios::binary);
    bad << "P5\n36 36\n65535\n" << std::string(36 * 36 * 2, '\x80');
  }
  const Run b = cli("predict --checkpoint p_run/best.fud --image odd.pgm --out m4.pgm");
  CHECK(b.code == 2);
}

TEST_CASE("gradcheck exit codes and report completeness") {
  const Run ok = cli("gradcheck --levels 2 --channels 2 --size 16");
  CHECK(ok.code == 0);
  const auto rows = lines_of(ok.out);
  REQUIRE(rows.size() > 3);
  std::set<std::string> names;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::string name;
    in >> name;
    CHECK(names.insert(name).second);
  }
  CHECK(names.count("head.final.weight") == 1);
  CHECK(rows.back().find("PASS") != std::string::npos);

  const Run bad = cli("gradcheck --levels 2 --channels 2 --size 16 --inject-fault");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(bad.err.find("head.final") != std::string::npos);

  CHECK(cli("gradcheck --precision f32").code == 2);
  CHECK(cli("gradcheck --levels 3 --size 20").code == 2);
}
