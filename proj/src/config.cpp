#include "loadest/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "loadest/corpus_io.hpp"

namespace loadest {
namespace {

// Calls fn(section, key, field) for every configurable field.
template <typename C, typename Fn>
void visit_fields(C& c, Fn&& fn) {
  auto& s = c.synth;
  fn("synth", "n_trips", s.n_trips);
  fn("synth", "stops_min", s.stops_min);
  fn("synth", "stops_max", s.stops_max);
  fn("synth", "n_routes", s.n_routes);
  fn("synth", "stop_type_count", s.stop_type_count);
  fn("synth", "poi_categories", s.poi_categories);
  fn("synth", "base_board_rate", s.base_board_rate);
  fn("synth", "hour_profile", s.hour_profile);
  fn("synth", "device_ratio_per_hour", s.device_ratio_per_hour);
  fn("synth", "wifi_missing_prob", s.wifi_missing_prob);
  fn("synth", "anchor_noise_sigma", s.anchor_noise_sigma);
  fn("synth", "anchor_outlier_prob", s.anchor_outlier_prob);
  fn("synth", "anchor_outlier_max_stops", s.anchor_outlier_max_stops);
  fn("synth", "anchor_outlier_low_min", s.anchor_outlier_low_min);
  fn("synth", "anchor_outlier_low_max", s.anchor_outlier_low_max);
  fn("synth", "anchor_outlier_high_min", s.anchor_outlier_high_min);
  fn("synth", "anchor_outlier_high_max", s.anchor_outlier_high_max);
  fn("synth", "weather_missing_prob", s.weather_missing_prob);
  fn("synth", "service_days", s.service_days);
  fn("synth", "epoch_start", s.epoch_start);
  fn("synth", "seed", s.seed);

  auto& a = c.synth.apc;
  fn("apc_noise", "board_miscount_prob", a.board_miscount_prob);
  fn("apc_noise", "alight_miscount_prob", a.alight_miscount_prob);
  fn("apc_noise", "undercount_share", a.undercount_share);
  fn("apc_noise", "gain_sigma", a.gain_sigma);
  fn("apc_noise", "spike_prob", a.spike_prob);
  fn("apc_noise", "spike_min", a.spike_min);
  fn("apc_noise", "spike_max", a.spike_max);
  fn("apc_noise", "spike_alight_share", a.spike_alight_share);
  fn("apc_noise", "cold_start_prob", a.cold_start_prob);
  fn("apc_noise", "cold_start_min_stops", a.cold_start_min_stops);
  fn("apc_noise", "cold_start_max_stops", a.cold_start_max_stops);

  fn("align", "tolerance_seconds", c.align.tolerance_seconds);
  fn("align", "weather_tolerance_seconds", c.align.weather_tolerance_seconds);

  auto& p = c.eval.pipeline;
  fn("pipeline", "capacity", p.capacity);
  fn("pipeline", "use_semantics", p.context.use_semantics);
  fn("pipeline", "use_weather", p.context.use_weather);
  fn("pipeline", "utc_offset_seconds", p.context.utc_offset_seconds);
  fn("pipeline", "semantic_k", p.semantic_k);
  fn("pipeline", "poi_radius_m", p.poi_radius_m);
  fn("pipeline", "semantic_seed", p.semantic_seed);
  fn("pipeline", "tau_quantile", p.tau_quantile);
  fn("pipeline", "abm_kappa", p.abm_kappa);
  fn("pipeline", "reweight_source", p.reweight_source);

  fn("forest", "n_trees", p.forest.n_trees);
  fn("forest", "max_depth", p.forest.max_depth);
  fn("forest", "min_samples_leaf", p.forest.min_samples_leaf);
  fn("forest", "max_features", p.forest.max_features);
  fn("forest", "max_bins", p.forest.max_bins);
  fn("forest", "seed", p.forest.seed);

  fn("trust", "s_d", p.trust.s_d);
  fn("trust", "s_e", p.trust.s_e);
  fn("trust", "alpha0", p.trust.alpha0);

  fn("shift", "min_anchor_fraction", p.shift.min_anchor_fraction);
  fn("shift", "mean_threshold", p.shift.mean_threshold);
  fn("shift", "std_threshold", p.shift.std_threshold);

  fn("reweight", "lambda", p.reweight.lambda);
  fn("reweight", "omega_max", p.reweight.omega_max);

  fn("eval", "seeds", c.eval.seeds);
  fn("eval", "folds", c.eval.folds);
  fn("eval", "variants", c.eval.variants);
  fn("eval", "min_bad_trips", c.eval.min_bad_trips);
  fn("eval", "gating_alpha", c.eval.gating_alpha);

  fn("audit", "n_samples", c.eval.audit.n_samples);
  fn("audit", "shock_w1_threshold", c.eval.audit.shock_w1_threshold);
  fn("audit", "lower_quantile", c.eval.audit.lower_q);
  fn("audit", "upper_quantile", c.eval.audit.upper_q);
  fn("audit", "seed", c.eval.audit.seed);
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InputError(fmt::format("config {}: cannot parse '{}'", key, text));
  return value;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  for (const std::string& part : split_fields(std::string(text), ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

struct Setter {
  std::string_view key;
  std::string_view text;

  void operator()(double& v) const {
    v = parse_number<double>(text, key);
    if (!std::isfinite(v)) throw InputError(fmt::format("config {}: value must be finite", key));
  }
  void operator()(int& v) const { v = parse_number<int>(text, key); }
  void operator()(std::int64_t& v) const { v = parse_number<std::int64_t>(text, key); }
  void operator()(std::uint64_t& v) const { v = parse_number<std::uint64_t>(text, key); }
  void operator()(bool& v) const {
    if (text == "true" || text == "1") {
      v = true;
    } else if (text == "false" || text == "0") {
      v = false;
    } else {
      throw InputError(fmt::format("config {}: expected true or false, got '{}'", key, text));
    }
  }
  void operator()(Capacity& v) const { v = Capacity(parse_number<double>(text, key)); }
  void operator()(std::array<double, 24>& v) const {
    const auto parts = split_list(text);
    if (parts.size() != 24) throw InputError(fmt::format("config {}: expected 24 values, got {}", key, parts.size()));
    for (std::size_t i = 0; i < 24; ++i) v[i] = parse_number<double>(parts[i], key);
  }
  void operator()(std::vector<std::uint64_t>& v) const {
    v.clear();
    for (const auto& part : split_list(text)) v.push_back(parse_number<std::uint64_t>(part, key));
  }
  void operator()(std::vector<Variant>& v) const {
    v.clear();
    for (const auto& part : split_list(text)) v.push_back(parse_variant(part));
  }
  void operator()(ReweightSource& v) const {
    if (text == "out_of_bag") {
      v = ReweightSource::out_of_bag;
    } else if (text == "in_sample") {
      v = ReweightSource::in_sample;
    } else {
      throw InputError(fmt::format("config {}: expected out_of_bag or in_sample, got '{}'", key, text));
    }
  }
};

std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(int v) { return fmt::format("{}", v); }
std::string format_value(std::int64_t v) { return fmt::format("{}", v); }
std::string format_value(std::uint64_t v) { return fmt::format("{}", v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const Capacity& v) { return fmt::format("{}", v.value()); }
std::string format_value(const std::array<double, 24>& v) { return fmt::format("{}", fmt::join(v, ",")); }
std::string format_value(const std::vector<std::uint64_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }
std::string format_value(const std::vector<Variant>& v) {
  std::vector<std::string_view> keys;
  for (Variant x : v) keys.push_back(variant_key(x));
  return fmt::format("{}", fmt::join(keys, ","));
}
std::string format_value(ReweightSource v) { return v == ReweightSource::out_of_bag ? "out_of_bag" : "in_sample"; }

}  // namespace

void Config::validate() const {
  synth.validate();
  eval.validate();
  if (align.tolerance_seconds < 0 || align.weather_tolerance_seconds < 0) {
    throw InputError("config align: tolerances must be non-negative");
  }
}

void set_config_value(Config& config, std::string_view dotted_key, std::string_view value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos) throw InputError(fmt::format("config key '{}' must be section.key", dotted_key));
  const std::string_view section = dotted_key.substr(0, dot);
  const std::string_view key = dotted_key.substr(dot + 1);
  const std::string text = trim(value);
  bool found = false;
  visit_fields(config, [&](std::string_view s, std::string_view k, auto& field) {
    if (s == section && k == key) {
      Setter{dotted_key, text}(field);
      found = true;
    }
  });
  if (!found) throw InputError(fmt::format("unknown config key '{}'", dotted_key));
  config.synth.capacity = config.eval.pipeline.capacity.value();
}

Config load_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InputError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  Config config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw InputError(fmt::format("config: '{}' is outside any section", section));
    for (const auto& [key, node] : body) set_config_value(config, section + "." + key, node.data());
  }
  config.validate();
  return config;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open config file {}", path));
  return load_config(in);
}

std::string dump_config(const Config& config) {
  std::string out;
  std::string_view current;
  visit_fields(config, [&](std::string_view s, std::string_view k, const auto& field) {
    if (s != current) {
      if (!out.empty()) out += '\n';
      out += fmt::format("[{}]\n", s);
      current = s;
    }
    out += fmt::format("{} = {}\n", k, format_value(field));
  });
  return out;
}

}  // namespace loadest
