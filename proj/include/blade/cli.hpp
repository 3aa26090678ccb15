#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include <nlohmann/json.hpp>

namespace blade::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

// Entry point shared by the `blade` executable and in-process tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// JSON or TOML, chosen by extension. Throws InvalidConfig / ParseError.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Tables become nested objects; scalars are typed as bool, integer, real or string.
nlohmann::json parse_toml(std::string_view text);

}  // namespace blade::cli
