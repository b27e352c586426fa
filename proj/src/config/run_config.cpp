// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

#include "config/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "common/error.hpp"

namespace fudsa {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorCode::InvalidArgument, "adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "adam eps must be > 0");
  if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (max_epochs < 1) fail(ErrorCode::InvalidArgument, "max_epochs must be >= 1");
  if (patience < 1) fail(ErrorCode::InvalidArgument, "patience must be >= 1");
  if (!(min_delta >= 0.0)) fail(ErrorCode::InvalidArgument, "min_delta must be >= 0");
  loss.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorCode::InvalidArgument, "invalid value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename C>
std::string join(const C& items) {
  std::string out;
  for (const auto& it : items) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_same_v<std::decay_t<decltype(it)>, double>) {
      out += fmt(it);
    } else {
      out += std::to_string(it);
    }
  }
  return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{
      "levels", "base_channels", "input_channels", "mlp_reduction", "sdc_dilations",
      "upsample_mode", "variant", "spatial_only", "deep_supervision", "decoder_residuals",
      "channel_branch_includes_sl", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
      "batch_size", "max_epochs", "patience", "min_delta", "seed", "loss_alpha", "loss_beta",
      "loss_gamma", "loss_smooth", "loss_side_weights", "loss_per_image", "data_dir", "lo_hu",
      "hi_hu", "size"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto& n = network;
  auto& t = train;
  if (key == "levels") n.levels = static_cast<int>(to_int(key, v));
  else if (key == "base_channels") n.base_channels = static_cast<int>(to_int(key, v));
  else if (key == "input_channels") n.input_channels = static_cast<int>(to_int(key, v));
  else if (key == "mlp_reduction") n.mlp_reduction = static_cast<int>(to_int(key, v));
  else if (key == "sdc_dilations") {
    n.sdc_dilations.clear();
    for (const auto& d : split_list(v)) n.sdc_dilations.push_back(static_cast<int>(to_int(key, d)));
  } else if (key == "upsample_mode") {
    if (v == "bilinear") n.upsample_mode = UpsampleMode::Bilinear;
    else if (v == "nearest") n.upsample_mode = UpsampleMode::Nearest;
    else bad_value(key, v);
  } else if (key == "variant") {
    if (v != "custom") {
      const bool keep_sl = n.variant.channel_branch_includes_sl;
      n.variant = VariantFlags::from_name(v);
      n.variant.channel_branch_includes_sl = keep_sl;
    }
  } else if (key == "spatial_only") n.variant.spatial_only = to_bool(key, v);
  else if (key == "deep_supervision") n.variant.deep_supervision = to_bool(key, v);
  else if (key == "decoder_residuals") n.variant.decoder_residuals = to_bool(key, v);
  else if (key == "channel_branch_includes_sl") n.variant.channel_branch_includes_sl = to_bool(key, v);
  else if (key == "learning_rate") t.learning_rate = to_double(key, v);
  else if (key == "adam_beta1") t.beta1 = to_double(key, v);
  else if (key == "adam_beta2") t.beta2 = to_double(key, v);
  else if (key == "adam_eps") t.eps = to_double(key, v);
  else if (key == "batch_size") t.batch_size = static_cast<int>(to_int(key, v));
  else if (key == "max_epochs") t.max_epochs = static_cast<int>(to_int(key, v));
  else if (key == "patience") t.patience = static_cast<int>(to_int(key, v));
  else if (key == "min_delta") t.min_delta = to_double(key, v);
  else if (key == "seed") t.seed = to_u64(key, v);
  else if (key == "loss_alpha") t.loss.alpha = to_double(key, v);
  else if (key == "loss_beta") t.loss.beta = to_double(key, v);
  else if (key == "loss_gamma") t.loss.gamma = to_double(key, v);
  else if (key == "loss_smooth") t.loss.smooth = to_double(key, v);
  else if (key == "loss_side_weights") {
    t.loss.side_weights.clear();
    for (const auto& w : split_list(v)) t.loss.side_weights.push_back(to_double(key, w));
  } else if (key == "loss_per_image") t.loss.per_image = to_bool(key, v);
  else if (key == "data_dir") data_dir = v;
  else if (key == "lo_hu") lo_hu = to_double(key, v);
  else if (key == "hi_hu") hi_hu = to_double(key, v);
  else if (key == "size") size = to_int(key, v);
  else fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

std::string RunConfig::variant_name() const {
  VariantFlags v = network.variant;
  v.channel_branch_includes_sl = false;
  for (const char* name : {"full", "I", "II", "III"}) {
    if (VariantFlags::from_name(name) == v) return name;
  }
  return "custom";
}

std::string RunConfig::to_text() const {
  const auto& n = network;
  const auto& t = train;
  std::ostringstream o;
  o << "levels=" << n.levels << "\n"
    << "base_channels=" << n.base_channels << "\n"
    << "input_channels=" << n.input_channels << "\n"
    << "mlp_reduction=" << n.mlp_reduction << "\n"
    << "sdc_dilations=" << join(n.sdc_dilations) << "\n"
    << "upsample_mode=" << (n.upsample_mode == UpsampleMode::Bilinear ? "bilinear" : "nearest") << "\n"
    << "variant=" << variant_name() << "\n"
    << "spatial_only=" << fmt(n.variant.spatial_only) << "\n"
    << "deep_supervision=" << fmt(n.variant.deep_supervision) << "\n"
    << "decoder_residuals=" << fmt(n.variant.decoder_residuals) << "\n"
    << "channel_branch_includes_sl=" << fmt(n.variant.channel_branch_includes_sl) << "\n"
    << "learning_rate=" << fmt(t.learning_rate) << "\n"
    << "adam_beta1=" << fmt(t.beta1) << "\n"
    << "adam_beta2=" << fmt(t.beta2) << "\n"
    << "adam_eps=" << fmt(t.eps) << "\n"
    << "batch_size=" << t.batch_size << "\n"
    << "max_epochs=" << t.max_epochs << "\n"
    << "patience=" << t.patience << "\n"
    << "min_delta=" << fmt(t.min_delta) << "\n"
    << "seed=" << t.seed << "\n"
    << "loss_alpha=" << fmt(t.loss.alpha) << "\n"
    << "loss_beta=" << fmt(t.loss.beta) << "\n"
    << "loss_gamma=" << fmt(t.loss.gamma) << "\n"
    << "loss_smooth=" << fmt(t.loss.smooth) << "\n"
    << "loss_side_weights=" << join(t.loss.side_weights) << "\n"
    << "loss_per_image=" << fmt(t.loss.per_image) << "\n"
    << "data_dir=" << data_dir << "\n"
    << "lo_hu=" << fmt(lo_hu) << "\n"
    << "hi_hu=" << fmt(hi_hu) << "\n"
    << "size=" << size << "\n";
  return o.str();
}

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (!(lo_hu < hi_hu)) fail(ErrorCode::InvalidArgument, "lo_hu must be < hi_hu");
  const std::int64_t unit = std::int64_t{1} << network.levels;
  if (size < 8 || size % unit != 0) {
    fail(ErrorCode::InvalidArgument, "size " + std::to_string(size) + " must be >= 8 and divisible by 2^levels = " +
                                         std::to_string(unit));
  }
}

RunConfig RunConfig::parse(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::vector<std::string> order;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + " is not key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (std::find(keys().begin(), keys().end(), key) == keys().end()) {
      fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "' on line " + std::to_string(lineno));
    }
    if (entries.contains(key)) fail(ErrorCode::InvalidArgument, "duplicate config key '" + key + "'");
    entries[key] = line.substr(eq + 1);
    order.push_back(key);
  }
  RunConfig cfg;
  if (entries.contains("variant")) cfg.set("variant", entries["variant"]);
  for (const auto& key : order) {
    if (key != "variant") cfg.set(key, entries[key]);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, path + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace fudsa
