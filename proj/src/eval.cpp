#include "blade/eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "blade/io.hpp"
#include "blade/llm/prompts.hpp"
#include "blade/parallel.hpp"

namespace blade::eval {

LoadResult load_dataset(const std::filesystem::path& path, bool lenient) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::IoError, "cannot open dataset " + path.string());
  }
  LoadResult result;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) {
      continue;
    }
    any_content = true;
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      if (!lenient) {
        throw Error(Errc::ParseError, "invalid JSON", line_no);
      }
      result.issues.push_back({line_no, Errc::ParseError, "invalid JSON"});
      continue;
    }
    try {
      auto example = validate_example(doc);
      if (!seen_ids.insert(example.id()).second) {
        throw Error(Errc::ValidationError, "duplicate example id " + example.id());
      }
      result.examples.push_back(std::move(example));
    } catch (const std::exception& e) {
      if (!lenient) {
        throw Error(Errc::ValidationError, e.what(), line_no);
      }
      result.issues.push_back({line_no, Errc::ValidationError, e.what()});
    }
  }
  result.empty = !any_content;
  return result;
}

void write_dataset(const std::filesystem::path& path, const std::vector<McqExample>& examples) {
  std::string out;
  for (const auto& example : examples) {
    out += to_json(example).dump();
    out += '\n';
  }
  io::atomic_write(path, out);
}

namespace {

bool is_ascii_alpha(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }

bool starts_with_at(std::string_view text, std::size_t pos, std::string_view token) {
  return text.size() >= pos + token.size() && text.compare(pos, token.size(), token) == 0;
}

// Skips characters that may sit between an anchor or separator and a label.
std::size_t skip_fillers(std::string_view text, std::size_t pos) {
  static constexpr std::array<std::string_view, 13> kFillers = {"选项", " ", "\t", ":", "：", "(", "（", "[", "【", "\"", "“", "'", "*"};
  bool moved = true;
  while (moved && pos < text.size()) {
    moved = false;
    for (auto filler : kFillers) {
      if (starts_with_at(text, pos, filler)) {
        pos += filler.size();
        moved = true;
        break;
      }
    }
  }
  return pos;
}

// Reads one ASCII word consisting only of label letters; returns its end.
std::optional<std::size_t> read_label_word(std::string_view text, std::size_t pos, LabelSet& into) {
  std::size_t end = pos;
  while (end < text.size() && is_ascii_alpha(text[end])) {
    ++end;
  }
  if (end == pos) {
    return std::nullopt;
  }
  for (std::size_t i = pos; i < end; ++i) {
    if (!LabelSet::is_label(text[i])) {
      return std::nullopt;
    }
  }
  for (std::size_t i = pos; i < end; ++i) {
    into.insert(text[i]);
  }
  return end;
}

struct Run {
  LabelSet labels;
  std::size_t end;
};

std::optional<Run> parse_label_run(std::string_view text, std::size_t pos) {
  static constexpr std::array<std::string_view, 10> kSeparators = {",", "，", "、", "和", "及", "&", "/", ";", "；", "and"};
  Run run;
  pos = skip_fillers(text, pos);
  const auto first = read_label_word(text, pos, run.labels);
  if (!first) {
    return std::nullopt;
  }
  run.end = *first;
  while (true) {
    std::size_t cursor = run.end;
    while (cursor < text.size() && (text[cursor] == ' ' || text[cursor] == ')' || text[cursor] == ']')) ++cursor;
    if (starts_with_at(text, cursor, "）")) cursor += std::string_view("）").size();
    if (starts_with_at(text, cursor, "】")) cursor += std::string_view("】").size();
    bool separated = cursor > run.end;
    for (auto sep : kSeparators) {
      if (starts_with_at(text, cursor, sep)) {
        // "and" must be a whole word.
        if (sep == "and" && cursor + 3 < text.size() && is_ascii_alpha(text[cursor + 3])) {
          continue;
        }
        cursor += sep.size();
        separated = true;
        break;
      }
    }
    if (!separated) {
      break;
    }
    cursor = skip_fillers(text, cursor);
    LabelSet next;
    const auto end = read_label_word(text, cursor, next);
    if (!end) {
      break;
    }
    for (char c : next.labels()) {
      run.labels.insert(c);
    }
    run.end = *end;
  }
  return run;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return out;
}

std::optional<LabelSet> anchored_rule(std::string_view completion, const LabelSet& allowed) {
  static constexpr std::array<std::string_view, 10> kAnchors = {
      "正确答案是", "答案是", "答案为", "答案：", "答案:", "correct answer is", "the answer is", "answer is", "answer:",
      "正确选项是"};
  const std::string lowered = ascii_lower(completion);
  std::vector<std::pair<std::size_t, std::size_t>> hits;  // (anchor position, run start)
  for (auto anchor : kAnchors) {
    for (auto pos = lowered.find(anchor); pos != std::string::npos; pos = lowered.find(anchor, pos + 1)) {
      hits.emplace_back(pos, pos + anchor.size());
    }
  }
  std::sort(hits.begin(), hits.end());
  for (const auto& [pos, start] : hits) {
    // English anchors must not be the tail of a longer word.
    if (pos > 0 && is_ascii_alpha(completion[pos - 1])) {
      continue;
    }
    const auto run = parse_label_run(completion, start);
    if (!run) {
      continue;
    }
    // Reject runs glued to following ASCII letters or digits.
    if (run->end < completion.size() && std::isalnum(static_cast<unsigned char>(completion[run->end]))) {
      continue;
    }
    const LabelSet restricted = run->labels.intersect(allowed);
    if (!restricted.empty()) {
      return restricted;
    }
  }
  return std::nullopt;
}

std::optional<LabelSet> standalone_line_rule(std::string_view completion, const LabelSet& allowed) {
  std::size_t start = 0;
  while (start <= completion.size()) {
    auto end = completion.find('\n', start);
    if (end == std::string_view::npos) end = completion.size();
    std::string line = io::trim(completion.substr(start, end - start));
    for (std::string_view tail : {"。", ".", ")", "）", "]", "】"}) {
      while (line.size() >= tail.size() && line.compare(line.size() - tail.size(), tail.size(), tail) == 0) {
        line.erase(line.size() - tail.size());
      }
    }
    if (!line.empty()) {
      const auto run = parse_label_run(line, 0);
      if (run && io::trim(std::string_view(line).substr(run->end)).empty()) {
        const LabelSet restricted = run->labels.intersect(allowed);
        if (!restricted.empty()) {
          return restricted;
        }
      }
    }
    if (end == completion.size()) break;
    start = end + 1;
  }
  return std::nullopt;
}

std::optional<LabelSet> bare_label_rule(std::string_view completion, const LabelSet& allowed) {
  for (std::size_t i = 0; i < completion.size(); ++i) {
    const char c = completion[i];
    if (c < kFirstLabel || c > kLastLabel || !allowed.contains(c)) {
      continue;
    }
    const bool left_ok = i == 0 || !is_ascii_alpha(completion[i - 1]);
    const bool right_ok = i + 1 >= completion.size() || !is_ascii_alpha(completion[i + 1]);
    if (left_ok && right_ok) {
      LabelSet out;
      out.insert(c);
      return out;
    }
  }
  return std::nullopt;
}

}  // namespace

LabelSet extract_answer(std::string_view completion, const LabelSet& allowed, bool multi) {
  if (auto found = anchored_rule(completion, allowed)) {
    return *found;
  }
  if (auto found = standalone_line_rule(completion, allowed)) {
    return *found;
  }
  if (!multi) {
    if (auto found = bare_label_rule(completion, allowed)) {
      return *found;
    }
  }
  return {};
}

EvalOutcome score_example(const McqExample& example, const LabelSet& predicted, std::string raw_completion) {
  EvalOutcome outcome;
  outcome.example_id = example.id();
  outcome.predicted_labels = predicted;
  outcome.correct = predicted == example.golden_labels();
  outcome.raw_completion = std::move(raw_completion);
  return outcome;
}

EvalReport assemble_report(std::vector<EvalOutcome> outcomes, const std::vector<McqExample>& examples) {
  std::map<std::string, const McqExample*> by_id;
  for (const auto& example : examples) {
    by_id.emplace(example.id(), &example);
  }
  std::sort(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) { return a.example_id < b.example_id; });
  EvalReport report;
  for (const auto& outcome : outcomes) {
    ++report.total;
    report.correct += outcome.correct ? 1 : 0;
    report.failures += outcome.error ? 1 : 0;
    const auto it = by_id.find(outcome.example_id);
    if (it != by_id.end() && it->second->subset_tag()) {
      auto& stats = report.per_subset[*it->second->subset_tag()];
      ++stats.total;
      stats.correct += outcome.correct ? 1 : 0;
    }
  }
  report.accuracy = report.total == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(report.total);
  for (auto& [tag, stats] : report.per_subset) {
    stats.accuracy = static_cast<double>(stats.correct) / static_cast<double>(stats.total);
  }
  report.outcomes = std::move(outcomes);
  return report;
}

EvalReport run_eval(llm::ChatClient& blackbox, const std::optional<KnowledgeSource>& knowledge,
                    const std::vector<McqExample>& examples, const EvalOptions& options) {
  std::optional<SoftEmbedding> embedding;
  if (knowledge) {
    if (knowledge->generator == nullptr || knowledge->projection == nullptr || knowledge->prompt == nullptr) {
      throw Error(Errc::InvalidConfig, "knowledge arm needs a generator, a projection and a prompt");
    }
    embedding = project(*knowledge->projection, *knowledge->prompt, knowledge->generator->n_tokens(),
                        knowledge->generator->hidden_dim());
  }
  const bool multi = options.multi_answer.value_or(
      std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.is_multi_answer(); }));

  std::vector<EvalOutcome> outcomes(examples.size());
  parallel_for(examples.size(), options.concurrency, [&](std::size_t i) {
    const McqExample& example = examples[i];
    try {
      std::optional<std::string> text;
      if (knowledge) {
        text = llm::generate_knowledge(*knowledge->generator,
                                       llm::GeneratorRequest{*embedding, knowledge->instruction, example.id(),
                                                             example.question_text(), llm::Decoding{}});
      }
      const std::string completion = blackbox.complete(llm::build_answer_prompt(example, text));
      outcomes[i] = score_example(example, extract_answer(completion, example.option_labels(), multi), completion);
    } catch (const std::exception& e) {
      EvalOutcome failed;
      failed.example_id = example.id();
      failed.correct = false;
      failed.error = e.what();
      outcomes[i] = std::move(failed);
    }
  });
  return assemble_report(std::move(outcomes), examples);
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json subsets = nlohmann::json::object();
  for (const auto& [tag, stats] : report.per_subset) {
    subsets[tag] = {{"total", stats.total}, {"correct", stats.correct}, {"accuracy", stats.accuracy}};
  }
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : report.outcomes) {
    nlohmann::json row = {{"example_id", o.example_id},
                          {"predicted", o.predicted_labels.to_string()},
                          {"correct", o.correct},
                          {"raw_completion", o.raw_completion}};
    if (o.error) {
      row["error"] = *o.error;
    }
    outcomes.push_back(std::move(row));
  }
  return {{"total", report.total},
          {"correct", report.correct},
          {"accuracy", report.accuracy},
          {"failures", report.failures},
          {"per_subset", subsets},
          {"outcomes", outcomes}};
}

std::string outcomes_csv(const EvalReport& report, const std::vector<McqExample>& examples) {
  std::map<std::string, const McqExample*> by_id;
  for (const auto& example : examples) {
    by_id.emplace(example.id(), &example);
  }
  std::ostringstream out;
  out << "example_id,subset,golden,predicted,correct,error\n";
  for (const auto& o : report.outcomes) {
    const auto it = by_id.find(o.example_id);
    const std::string subset = it != by_id.end() ? it->second->subset_tag().value_or("") : "";
    const std::string golden = it != by_id.end() ? it->second->golden_labels().to_string() : "";
    out << io::csv_escape(o.example_id) << ',' << io::csv_escape(subset) << ',' << golden << ','
        << o.predicted_labels.to_string() << ',' << (o.correct ? 1 : 0) << ',' << io::csv_escape(o.error.value_or(""))
        << '\n';
  }
  return out.str();
}

}  // namespace blade::eval
