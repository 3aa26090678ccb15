#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace blade {

inline constexpr char kFirstLabel = 'A';
inline constexpr char kLastLabel = 'H';
inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 8;

// Set of option labels A..H stored as a bitmask; iteration is in label order.
class LabelSet {
 public:
  LabelSet() = default;

  static bool is_label(char c);
  // Parses a concatenated label string such as "AC" or "ac". Returns nullopt
  // on any character outside A..H (after uppercasing) or on an empty string.
  static std::optional<LabelSet> parse(std::string_view text);
  // The first `count` labels starting at 'A'.
  static LabelSet first(std::size_t count);

  void insert(char label);
  bool contains(char label) const;
  std::size_t size() const;
  bool empty() const { return bits_ == 0; }
  bool is_subset_of(const LabelSet& other) const { return (bits_ & ~other.bits_) == 0; }
  LabelSet intersect(const LabelSet& other) const;
  std::vector<char> labels() const;
  std::string to_string() const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct OptionEntry {
  char label;
  std::string text;
  friend bool operator==(const OptionEntry&, const OptionEntry&) = default;
};

// A validated multiple-choice question. The constructor enforces every field
// invariant, so an instance is always well-formed.
class McqExample {
 public:
  McqExample(std::string id, std::string question_text, std::vector<OptionEntry> options, LabelSet golden_labels,
             std::optional<std::string> subset_tag = std::nullopt, std::string language_tag = "zh");

  const std::string& id() const { return id_; }
  const std::string& question_text() const { return question_text_; }
  const std::vector<OptionEntry>& options() const { return options_; }
  const LabelSet& golden_labels() const { return golden_labels_; }
  const std::optional<std::string>& subset_tag() const { return subset_tag_; }
  const std::string& language_tag() const { return language_tag_; }
  LabelSet option_labels() const { return LabelSet::first(options_.size()); }
  bool is_multi_answer() const { return golden_labels_.size() > 1; }

  friend bool operator==(const McqExample&, const McqExample&) = default;

 private:
  std::string id_;
  std::string question_text_;
  std::vector<OptionEntry> options_;
  LabelSet golden_labels_;
  std::optional<std::string> subset_tag_;
  std::string language_tag_;
};

// Builds an McqExample from a JSONL record
// {"id", "question", "options": {"A": ...}, "answer": "AC", "subset"?, "lang"?}.
// Throws Error with MissingField, DuplicateLabel, InvalidLabel or GoldenNotInOptions.
McqExample validate_example(const nlohmann::json& raw);
nlohmann::json to_json(const McqExample& example);

// The d-dimensional vector searched by Bayesian optimization.
class LowDimPrompt {
 public:
  explicit LowDimPrompt(Eigen::VectorXd values);
  explicit LowDimPrompt(const std::vector<double>& values);
  static LowDimPrompt zeros(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  std::vector<double> to_vector() const;

  friend bool operator==(const LowDimPrompt& a, const LowDimPrompt& b) { return a.values_ == b.values_; }

 private:
  Eigen::VectorXd values_;
};

// n_tokens soft-token vectors of hidden_dim entries, stored flat in token order.
class SoftEmbedding {
 public:
  SoftEmbedding(std::size_t n_tokens, std::size_t hidden_dim, Eigen::VectorXd flat);

  std::size_t n_tokens() const { return n_tokens_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t total_dim() const { return n_tokens_ * hidden_dim_; }
  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd token(std::size_t index) const;

 private:
  std::size_t n_tokens_;
  std::size_t hidden_dim_;
  Eigen::VectorXd flat_;
};

struct KnowledgeRecord {
  std::string example_id;
  std::string knowledge_text;
  std::string generator_id;
  std::optional<bool> consistency_verdict;
  std::string created_at;
};

// Throws ValidationError when the knowledge text is blank.
KnowledgeRecord make_knowledge_record(std::string example_id, std::string knowledge_text, std::string generator_id,
                                      std::string created_at);
nlohmann::json to_json(const KnowledgeRecord& record);
KnowledgeRecord knowledge_record_from_json(const nlohmann::json& raw);

struct EvalOutcome {
  std::string example_id;
  LabelSet predicted_labels;
  bool correct = false;
  std::string raw_completion;
  // Set when the black-box call failed; such outcomes are always incorrect.
  std::optional<std::string> error;
};

}  // namespace blade
