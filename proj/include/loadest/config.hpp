#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "loadest/alignment.hpp"
#include "loadest/evaluation.hpp"
#include "loadest/synthetic.hpp"

namespace loadest {

/// Everything the CLI can configure. Capacity lives in [pipeline] and is
/// copied into the generator settings by load/set.
struct Config {
  SynthConfig synth;
  EvalConfig eval;
  AlignOptions align;

  void validate() const;
};

/// INI file with sections; keys absent from the file keep their defaults.
/// Unknown sections or keys and unparseable values raise InputError.
Config load_config(std::istream& in);
Config load_config_file(const std::string& path);

/// Overrides one value, addressed as "section.key".
void set_config_value(Config& config, std::string_view dotted_key, std::string_view value);

/// Fully resolved config in the same INI layout; load_config(dump) round-trips.
std::string dump_config(const Config& config);

}  // namespace loadest
