#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <sstream>

#include "blade/cli.hpp"
#include "blade/error.hpp"
#include "blade/io.hpp"

namespace blade::cli {

namespace {

nlohmann::json scalar_from_text(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty()) {
    if (text[0] == '-') {
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec == std::errc() && ptr == last) return value;
    } else {
      std::uint64_t value = 0;
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec == std::errc() && ptr == last) return value;
    }
    double real = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, real);
    if (ec == std::errc() && ptr == last) return real;
  }
  return text;
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error(Errc::ParseError, std::string("TOML: ") + e.what());
  }
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    nlohmann::json* node = &doc;
    for (const auto& parent : item.parents) {
      if (!node->contains(parent)) (*node)[parent] = nlohmann::json::object();
      node = &(*node)[parent];
      if (!node->is_object()) throw Error(Errc::ParseError, "TOML: key '" + item.fullname() + "' redefined");
    }
    if (item.inputs.size() == 1) {
      (*node)[item.name] = scalar_from_text(item.inputs.front());
    } else {
      nlohmann::json array = nlohmann::json::array();
      for (const auto& input : item.inputs) array.push_back(scalar_from_text(input));
      (*node)[item.name] = std::move(array);
    }
  }
  return doc;
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::InvalidConfig, "config file not found: " + path.string());
  auto extension = path.extension().string();
  std::transform(extension.begin(), extension.end(), extension.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto text = io::read_file(path);
  if (extension == ".toml") return parse_toml(text);
  if (extension == ".json") {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::ParseError, path.string() + ": " + e.what());
    }
  }
  throw Error(Errc::InvalidConfig, "config must be .json or .toml: " + path.string());
}

}  // namespace blade::cli
