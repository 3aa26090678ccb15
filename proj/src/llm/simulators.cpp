#include "blade/llm/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "blade/io.hpp"
#include "blade/llm/prompts.hpp"
#include "blade/rng.hpp"

namespace blade::llm {

namespace {

constexpr std::string_view kUtilityOpen = "<utility=";

}  // namespace

std::string render_answer(const LabelSet& labels) { return "答案是" + labels.to_string(); }

LabelSet wrong_answer(const McqExample& example) {
  LabelSet out;
  for (const auto& option : example.options()) {
    if (!example.golden_labels().contains(option.label)) {
      out.insert(option.label);
      break;
    }
  }
  return out;
}

std::string utility_tag(double value) { return std::string(kUtilityOpen) + io::format_double(value) + ">"; }

std::optional<double> parse_utility_tag(const std::string& knowledge) {
  const auto start = knowledge.rfind(kUtilityOpen);
  if (start == std::string::npos) {
    return std::nullopt;
  }
  const auto value_start = start + kUtilityOpen.size();
  const auto end = knowledge.find('>', value_start);
  if (end == std::string::npos) {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const std::string text = knowledge.substr(value_start, end - value_start);
    const double value = std::stod(text, &used);
    if (used != text.size()) {
      return std::nullopt;
    }
    return value;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string simulated_blackbox(const SyntheticTask& task, const std::string& knowledge, const McqExample& question,
                               OracleMode mode) {
  bool knows = false;
  if (mode == OracleMode::FactToken) {
    const auto it = task.fact_tokens.find(question.id());
    knows = it != task.fact_tokens.end() && knowledge.find(it->second) != std::string::npos;
  } else {
    const auto value = parse_utility_tag(knowledge);
    knows = value && *value >= task.threshold_for(question.id());
  }
  if (knows) {
    return render_answer(question.golden_labels());
  }
  const LabelSet wrong = wrong_answer(question);
  return wrong.empty() ? std::string("无法确定。") : render_answer(wrong);
}

std::set<std::string> select_covered(const std::vector<McqExample>& examples, double fraction, std::uint64_t seed) {
  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  keyed.reserve(examples.size());
  for (const auto& example : examples) {
    keyed.emplace_back(mix_seed(seed, stable_hash(example.id())), example.id());
  }
  std::sort(keyed.begin(), keyed.end());
  const auto count = static_cast<std::size_t>(std::llround(std::clamp(fraction, 0.0, 1.0) * static_cast<double>(examples.size())));
  std::set<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.insert(keyed[i].second);
  }
  return out;
}

ExampleIndex::ExampleIndex(std::vector<McqExample> examples) : examples_(std::move(examples)) {
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    by_id_.emplace(examples_[i].id(), i);
  }
}

const McqExample* ExampleIndex::find(const std::string& content) const {
  const McqExample* best = nullptr;
  std::size_t best_pos = 0;
  for (const auto& example : examples_) {
    const auto pos = content.rfind(example.question_text());
    if (pos == std::string::npos) {
      continue;
    }
    if (best == nullptr || pos > best_pos ||
        (pos == best_pos && example.question_text().size() > best->question_text().size())) {
      best = &example;
      best_pos = pos;
    }
  }
  return best;
}

const McqExample* ExampleIndex::by_id(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &examples_[it->second];
}

std::string EchoChatSimulator::complete(const ChatRequest& request) {
  request.validate();
  return request.last_user_content();
}

OracleBlackBox::OracleBlackBox(SyntheticTask task, std::vector<McqExample> examples, OracleMode mode,
                               std::set<std::string> knowledgeable_ids)
    : task_(std::move(task)), index_(std::move(examples)), mode_(mode), knowledgeable_(std::move(knowledgeable_ids)) {}

std::string OracleBlackBox::complete(const ChatRequest& request) {
  request.validate();
  const McqExample* example = index_.find(request.last_user_content());
  if (example == nullptr) {
    throw Error(Errc::MalformedResponse, "oracle simulator does not know the question in this prompt");
  }
  if (is_answer_prompt(request)) {
    ++answer_calls_;
    const auto knowledge = knowledge_in_answer_prompt(request, *example);
    return simulated_blackbox(task_, knowledge.value_or(std::string()), *example, mode_);
  }
  ++generation_calls_;
  std::string knowledge = "与题目「" + example->id() + "」相关的知识：该问题涉及选项 " +
                          example->golden_labels().to_string() + " 所述的法律规定。";
  if (knowledgeable_.count(example->id()) != 0) {
    knowledge += " " + task_.fact_token_for(example->id());
  }
  return knowledge;
}

FlakyChatClient::FlakyChatClient(ChatClient& inner, std::vector<McqExample> examples, std::map<std::string, int> failures,
                                 Errc error)
    : inner_(inner), index_(std::move(examples)), remaining_(std::move(failures)), error_(error) {}

std::string FlakyChatClient::complete(const ChatRequest& request) {
  const McqExample* example = index_.find(request.last_user_content());
  if (example != nullptr) {
    std::lock_guard lock(mutex_);
    const auto it = remaining_.find(example->id());
    if (it != remaining_.end() && it->second != 0) {
      if (it->second > 0) {
        --it->second;
      }
      throw Error(error_, "injected failure for " + example->id());
    }
  }
  return inner_.complete(request);
}

FactTokenGenerator::FactTokenGenerator(SyntheticTask task, std::set<std::string> covered, std::size_t n_tokens,
                                       std::size_t hidden_dim)
    : task_(std::move(task)), covered_(std::move(covered)), n_tokens_(n_tokens), hidden_dim_(hidden_dim) {}

std::string FactTokenGenerator::generate(const GeneratorRequest& request) {
  ++calls_;
  std::string text = "Knowledge for " + request.question_id + ".";
  if (covered_.count(request.question_id) != 0) {
    text += " " + task_.fact_token_for(request.question_id);
  }
  return text;
}

UtilityGenerator::UtilityGenerator(SyntheticTask task, std::size_t n_tokens, std::size_t hidden_dim)
    : task_(std::move(task)), n_tokens_(n_tokens), hidden_dim_(hidden_dim) {}

std::string UtilityGenerator::generate(const GeneratorRequest& request) {
  ++calls_;
  return "Knowledge for " + request.question_id + " " + utility_tag(utility(task_, request.soft_embedding));
}

CannedGenerator::CannedGenerator(std::map<std::string, std::string> knowledge, std::size_t n_tokens,
                                 std::size_t hidden_dim)
    : knowledge_(std::move(knowledge)), n_tokens_(n_tokens), hidden_dim_(hidden_dim) {}

std::string CannedGenerator::generate(const GeneratorRequest& request) {
  const auto it = knowledge_.find(request.question_id);
  if (it == knowledge_.end()) {
    throw Error(Errc::MalformedResponse, "no canned knowledge for " + request.question_id);
  }
  return it->second;
}

}  // namespace blade::llm
