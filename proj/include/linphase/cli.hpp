#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace linphase::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitConfig = 2;

struct Validation {
  nlohmann::json config;  // every key present, defaults filled in
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

// Flat JSON config for one subcommand. Errors carry JSON-pointer paths,
// e.g. "/m: width must be even (symmetric initialization)".
Validation validate_config(const nlohmann::json& raw, std::string_view subcommand);

const std::vector<std::string>& subcommands();

int run(int argc, const char* const* argv);

}  // namespace linphase::cli
