#include "blade/core.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <utility>

#include "blade/error.hpp"
#include "blade/io.hpp"

namespace blade {

namespace {

char normalize_label(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

int label_bit(char label) { return normalize_label(label) - kFirstLabel; }

}  // namespace

bool LabelSet::is_label(char c) {
  const char upper = normalize_label(c);
  return upper >= kFirstLabel && upper <= kLastLabel;
}

std::optional<LabelSet> LabelSet::parse(std::string_view text) {
  if (text.empty()) {
    return std::nullopt;
  }
  LabelSet out;
  for (char c : text) {
    if (!is_label(c)) {
      return std::nullopt;
    }
    out.insert(c);
  }
  return out;
}

LabelSet LabelSet::first(std::size_t count) {
  LabelSet out;
  for (std::size_t i = 0; i < count && i < kMaxOptions; ++i) {
    out.insert(static_cast<char>(kFirstLabel + i));
  }
  return out;
}

void LabelSet::insert(char label) {
  if (!is_label(label)) {
    throw Error(Errc::InvalidLabel, std::string("label out of range: ") + label);
  }
  bits_ = static_cast<std::uint8_t>(bits_ | (1u << label_bit(label)));
}

bool LabelSet::contains(char label) const {
  return is_label(label) && (bits_ & (1u << label_bit(label))) != 0;
}

std::size_t LabelSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

LabelSet LabelSet::intersect(const LabelSet& other) const {
  LabelSet out;
  out.bits_ = static_cast<std::uint8_t>(bits_ & other.bits_);
  return out;
}

std::vector<char> LabelSet::labels() const {
  std::vector<char> out;
  for (int i = 0; i < static_cast<int>(kMaxOptions); ++i) {
    if (bits_ & (1u << i)) {
      out.push_back(static_cast<char>(kFirstLabel + i));
    }
  }
  return out;
}

std::string LabelSet::to_string() const {
  const auto list = labels();
  return std::string(list.begin(), list.end());
}

McqExample::McqExample(std::string id, std::string question_text, std::vector<OptionEntry> options,
                       LabelSet golden_labels, std::optional<std::string> subset_tag, std::string language_tag)
    : id_(std::move(id)),
      question_text_(std::move(question_text)),
      options_(std::move(options)),
      golden_labels_(golden_labels),
      subset_tag_(std::move(subset_tag)),
      language_tag_(std::move(language_tag)) {
  if (io::trim(id_).empty()) {
    throw Error(Errc::MissingField, "example id is empty");
  }
  if (io::trim(question_text_).empty()) {
    throw Error(Errc::MissingField, "question text is empty for " + id_);
  }
  if (options_.size() < kMinOptions || options_.size() > kMaxOptions) {
    throw Error(Errc::InvalidLabel, "option count must be in [2, 8] for " + id_);
  }
  LabelSet seen;
  for (auto& option : options_) {
    if (!LabelSet::is_label(option.label)) {
      throw Error(Errc::InvalidLabel, std::string("option label out of range: ") + option.label);
    }
    option.label = normalize_label(option.label);
    if (seen.contains(option.label)) {
      throw Error(Errc::DuplicateLabel, std::string("duplicate option label ") + option.label + " in " + id_);
    }
    seen.insert(option.label);
  }
  std::sort(options_.begin(), options_.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
  if (seen != LabelSet::first(options_.size())) {
    throw Error(Errc::InvalidLabel, "option labels must be contiguous from A in " + id_);
  }
  if (golden_labels_.empty()) {
    throw Error(Errc::MissingField, "golden answer is empty for " + id_);
  }
  if (!golden_labels_.is_subset_of(seen)) {
    throw Error(Errc::GoldenNotInOptions,
                "answer " + golden_labels_.to_string() + " not among options " + seen.to_string() + " in " + id_);
  }
}

McqExample validate_example(const nlohmann::json& raw) {
  if (!raw.is_object()) {
    throw Error(Errc::MissingField, "record is not a JSON object");
  }
  for (const char* field : {"id", "question", "options", "answer"}) {
    if (!raw.contains(field) || raw.at(field).is_null()) {
      throw Error(Errc::MissingField, std::string("missing field '") + field + "'");
    }
  }
  std::string id = raw.at("id").is_string() ? raw.at("id").get<std::string>() : raw.at("id").dump();
  const auto& raw_options = raw.at("options");
  if (!raw_options.is_object()) {
    throw Error(Errc::MissingField, "'options' must be an object of label -> text");
  }
  std::vector<OptionEntry> options;
  for (const auto& [key, value] : raw_options.items()) {
    if (key.size() != 1) {
      throw Error(Errc::InvalidLabel, "option label must be a single letter: " + key);
    }
    options.push_back({key[0], value.get<std::string>()});
  }
  const auto answer_text = raw.at("answer").get<std::string>();
  std::string compact;
  for (char c : answer_text) {
    if (c != ' ' && c != ',') {
      compact += c;
    }
  }
  const auto golden = LabelSet::parse(compact);
  if (!golden) {
    // A letter beyond H can never be among the options.
    if (!compact.empty() && std::all_of(compact.begin(), compact.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); })) {
      throw Error(Errc::GoldenNotInOptions, "answer '" + answer_text + "' not among options in " + id);
    }
    throw Error(Errc::MissingField, "answer '" + answer_text + "' is not a label string in " + id);
  }
  std::optional<std::string> subset;
  if (raw.contains("subset") && raw.at("subset").is_string()) {
    subset = raw.at("subset").get<std::string>();
  }
  std::string lang = raw.contains("lang") && raw.at("lang").is_string() ? raw.at("lang").get<std::string>() : "zh";
  return McqExample(std::move(id), raw.at("question").get<std::string>(), std::move(options), *golden, std::move(subset),
                    std::move(lang));
}

nlohmann::json to_json(const McqExample& example) {
  nlohmann::json options = nlohmann::json::object();
  for (const auto& option : example.options()) {
    options[std::string(1, option.label)] = option.text;
  }
  nlohmann::json out = {{"id", example.id()},
                        {"question", example.question_text()},
                        {"options", options},
                        {"answer", example.golden_labels().to_string()}};
  if (example.subset_tag()) {
    out["subset"] = *example.subset_tag();
  }
  out["lang"] = example.language_tag();
  return out;
}

LowDimPrompt::LowDimPrompt(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() == 0) {
    throw Error(Errc::InvalidDims, "prompt dimension must be positive");
  }
  if (!values_.allFinite()) {
    throw Error(Errc::NonFinite, "prompt has non-finite entries");
  }
}

LowDimPrompt::LowDimPrompt(const std::vector<double>& values)
    : LowDimPrompt(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()))) {}

LowDimPrompt LowDimPrompt::zeros(std::size_t dim) {
  return LowDimPrompt(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)));
}

std::vector<double> LowDimPrompt::to_vector() const { return {values_.data(), values_.data() + values_.size()}; }

SoftEmbedding::SoftEmbedding(std::size_t n_tokens, std::size_t hidden_dim, Eigen::VectorXd flat)
    : n_tokens_(n_tokens), hidden_dim_(hidden_dim), flat_(std::move(flat)) {
  if (n_tokens_ == 0 || hidden_dim_ == 0) {
    throw Error(Errc::InvalidDims, "soft embedding needs positive n_tokens and hidden_dim");
  }
  if (static_cast<std::size_t>(flat_.size()) != n_tokens_ * hidden_dim_) {
    throw Error(Errc::DimMismatch, "soft embedding length " + std::to_string(flat_.size()) + " != " +
                                       std::to_string(n_tokens_) + " x " + std::to_string(hidden_dim_));
  }
  if (!flat_.allFinite()) {
    throw Error(Errc::NonFinite, "soft embedding has non-finite entries");
  }
}

Eigen::VectorXd SoftEmbedding::token(std::size_t index) const {
  if (index >= n_tokens_) {
    throw Error(Errc::DimMismatch, "token index out of range");
  }
  return flat_.segment(static_cast<Eigen::Index>(index * hidden_dim_), static_cast<Eigen::Index>(hidden_dim_));
}

KnowledgeRecord make_knowledge_record(std::string example_id, std::string knowledge_text, std::string generator_id,
                                      std::string created_at) {
  if (io::trim(knowledge_text).empty()) {
    throw Error(Errc::ValidationError, "knowledge text is blank for " + example_id);
  }
  return KnowledgeRecord{std::move(example_id), std::move(knowledge_text), std::move(generator_id), std::nullopt,
                         std::move(created_at)};
}

nlohmann::json to_json(const KnowledgeRecord& record) {
  nlohmann::json out = {{"example_id", record.example_id},
                        {"knowledge", record.knowledge_text},
                        {"generator_id", record.generator_id},
                        {"created_at", record.created_at}};
  out["verdict"] = record.consistency_verdict ? nlohmann::json(*record.consistency_verdict) : nlohmann::json(nullptr);
  return out;
}

KnowledgeRecord knowledge_record_from_json(const nlohmann::json& raw) {
  for (const char* field : {"example_id", "knowledge"}) {
    if (!raw.contains(field)) {
      throw Error(Errc::MissingField, std::string("knowledge record missing '") + field + "'");
    }
  }
  auto record = make_knowledge_record(raw.at("example_id").get<std::string>(), raw.at("knowledge").get<std::string>(),
                                      raw.value("generator_id", std::string()), raw.value("created_at", std::string()));
  if (raw.contains("verdict") && raw.at("verdict").is_boolean()) {
    record.consistency_verdict = raw.at("verdict").get<bool>();
  }
  return record;
}

}  // namespace blade
