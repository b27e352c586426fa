// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "common/error.hpp"
#include "config/run_config.hpp"

using namespace fudsa;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fudsa::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("run config: defaults", "[config]") {
  const RunConfig c = RunConfig::parse("");
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.train.batch_size == 4);
  CHECK(c.train.max_epochs == 300);
  CHECK(c.train.patience == 10);
  CHECK(c.train.min_delta == 1e-5);
  CHECK(c.train.loss.alpha == 0.7);
  CHECK(c.train.loss.beta == 0.3);
  CHECK(c.network.levels == 4);
  CHECK(c.network.base_channels == 16);
  CHECK(c.lo_hu == -1000.0);
  CHECK(c.hi_hu == 170.0);
  CHECK(c.variant_name() == "full");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("run config: comments, whitespace, values", "[config]") {
  const RunConfig c = RunConfig::parse(
      "# header\n"
      "\n"
      "levels = 3   # shallower\n"
      "sdc_dilations=1, 3\n"
      "loss_side_weights=0.5,0.25,0.25\n"
      "upsample_mode=nearest\n"
      "seed=18446744073709551615\n"
      "data_dir=/tmp/some dir\n");
  CHECK(c.network.levels == 3);
  CHECK(c.network.sdc_dilations == std::vector<int>{1, 3});
  CHECK(c.train.loss.side_weights == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(c.network.upsample_mode == UpsampleMode::Nearest);
  CHECK(c.train.seed == 18446744073709551615ULL);
  CHECK(c.data_dir == "/tmp/some dir");
}

TEST_CASE("run config: rejects unknown, duplicate and malformed entries", "[config]") {
  CHECK(code_of([] { RunConfig::parse("learning_rat=1\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RunConfig::parse("levels=3\nlevels=4\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RunConfig::parse("levels\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RunConfig::parse("levels=three\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RunConfig::parse("deep_supervision=maybe\n"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RunConfig::parse("variant=IV\n"); }) == ErrorCode::InvalidArgument);
  RunConfig c;
  CHECK(code_of([&] { c.set("nope", "1"); }) == ErrorCode::InvalidArgument);
  c.size = 60;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("run config: variants resolve to flags, explicit flags win", "[config]") {
  const RunConfig two = RunConfig::parse("variant=II\n");
  CHECK_FALSE(two.network.variant.deep_supervision);
  CHECK(two.to_text().find("deep_supervision=false\n") != std::string::npos);
  CHECK(two.to_text().find("variant=II\n") != std::string::npos);
  CHECK(RunConfig::parse("variant=I").network.variant.spatial_only);
  CHECK_FALSE(RunConfig::parse("variant=III").network.variant.decoder_residuals);
  // Flag before variant in the file still overrides it.
  const RunConfig mixed = RunConfig::parse("deep_supervision=true\nvariant=II\n");
  CHECK(mixed.network.variant.deep_supervision);
  CHECK(mixed.variant_name() == "full");
  const RunConfig custom = RunConfig::parse("variant=I\ndecoder_residuals=false\n");
  CHECK(custom.variant_name() == "custom");
}

TEST_CASE("run config: resolved text round-trips exactly", "[config]") {
  RunConfig c = RunConfig::parse("variant=III\nlearning_rate=0.001\nloss_gamma=1.3333333333333333\n");
  c.set("min_delta", "1e-7");
  c.set("lo_hu", "-1000.5");
  const std::string text = c.to_text();
  const RunConfig back = RunConfig::parse(text);
  CHECK(back.to_text() == text);
  CHECK(back.train.min_delta == 1e-7);
  CHECK(back.train.learning_rate == 0.001);
  for (const auto& k : RunConfig::keys()) CHECK(text.find(k + "=") != std::string::npos);
}
