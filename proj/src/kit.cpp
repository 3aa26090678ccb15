#include "blade/kit.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "blade/error.hpp"
#include "blade/eval.hpp"
#include "blade/io.hpp"
#include "blade/llm/prompts.hpp"
#include "blade/parallel.hpp"

namespace blade::kit {

namespace {

constexpr std::string_view kSlotDemonstrations = "{{demonstrations}}";
constexpr std::string_view kSlotQuestion = "{{question}}";
constexpr std::string_view kSlotOptions = "{{options}}";
constexpr std::string_view kSlotAnswer = "{{answer}}";
constexpr std::string_view kContextHeader = "参考资料：";

constexpr std::string_view kDefaultUserTemplate =
    "下面的示例给出了题目、正确答案以及能够推导出该答案的知识。\n\n"
    "{{demonstrations}}\n\n"
    "请参照示例，根据正确答案反向推理，为下面的题目写出一段知识。\n"
    "问题：{{question}}\n"
    "选项：\n{{options}}\n"
    "答案：{{answer}}\n"
    "知识：";

std::vector<Demonstration> default_demonstrations() {
  return {
      {"甲将自己的房屋出租给乙，租期内甲将房屋卖给丙。乙的租赁合同是否继续有效？",
       "A. 有效\nB. 无效\nC. 效力待定\nD. 可撤销", "A",
       "买卖不破租赁：租赁物在承租人按照租赁合同占有期限内发生所有权变动的，不影响租赁合同的效力。"},
      {"下列哪些属于刑法规定的正当防卫的成立条件？",
       "A. 存在现实的不法侵害\nB. 不法侵害正在进行\nC. 具有防卫意识\nD. 防卫行为针对第三人", "ABC",
       "正当防卫须针对正在进行的现实不法侵害，行为人具有防卫意识，且防卫行为针对不法侵害人本人实施。"},
      {"限制民事行为能力人订立的与其年龄、智力相适应的合同效力如何？",
       "A. 无效\nB. 有效\nC. 效力待定\nD. 可撤销", "B",
       "限制民事行为能力人可以独立实施纯获利益的民事法律行为或者与其年龄、智力相适应的民事法律行为，此类合同有效。"},
  };
}

void replace_all(std::string& text, std::string_view slot, const std::string& value) {
  for (auto pos = text.find(slot); pos != std::string::npos; pos = text.find(slot, pos + value.size())) {
    text.replace(pos, slot.size(), value);
  }
}

std::string render_demonstration(const Demonstration& demo) {
  std::string out(llm::kQuestionHeader);
  out += demo.question;
  out += '\n';
  out += llm::kOptionsHeader;
  out += '\n';
  out += demo.options;
  out += '\n';
  out += llm::kAnswerHeader;
  out += demo.answer;
  out += "\n知识：";
  out += demo.knowledge;
  return out;
}

}  // namespace

void GenerationPromptTemplate::validate() const {
  std::vector<std::string_view> required = {kSlotQuestion, kSlotOptions, kSlotAnswer};
  if (demonstration_count > 0) {
    required.push_back(kSlotDemonstrations);
  }
  for (auto slot : required) {
    if (user_template.find(slot) == std::string::npos) {
      throw Error(Errc::TemplateSlotMissing, "generation template lacks " + std::string(slot));
    }
  }
  if (demonstrations.size() != demonstration_count) {
    throw Error(Errc::InvalidConfig, "template expects " + std::to_string(demonstration_count) +
                                         " demonstrations, got " + std::to_string(demonstrations.size()));
  }
  if (io::trim(system_text).empty()) {
    throw Error(Errc::InvalidConfig, "generation template has an empty instruction");
  }
}

GenerationPromptTemplate GenerationPromptTemplate::defaults() {
  GenerationPromptTemplate tmpl;
  tmpl.system_text = std::string(llm::kKnowledgeInstruction);
  tmpl.user_template = std::string(kDefaultUserTemplate);
  tmpl.demonstrations = default_demonstrations();
  tmpl.demonstration_count = tmpl.demonstrations.size();
  return tmpl;
}

GenerationPromptTemplate GenerationPromptTemplate::load(const std::filesystem::path& template_path,
                                                        const std::optional<std::filesystem::path>& demos) {
  GenerationPromptTemplate tmpl = defaults();
  const std::string text = io::read_file(template_path);
  const std::string separator = "\n---\n";
  const auto split = text.find(separator);
  if (split != std::string::npos) {
    tmpl.system_text = io::trim(text.substr(0, split));
    tmpl.user_template = text.substr(split + separator.size());
  } else {
    tmpl.user_template = text;
  }
  while (!tmpl.user_template.empty() && (tmpl.user_template.back() == '\n' || tmpl.user_template.back() == '\r')) {
    tmpl.user_template.pop_back();
  }
  if (demos) {
    std::istringstream lines(io::read_file(*demos));
    std::string line;
    tmpl.demonstrations.clear();
    while (std::getline(lines, line)) {
      if (io::trim(line).empty()) continue;
      const auto doc = nlohmann::json::parse(line);
      tmpl.demonstrations.push_back({doc.at("question").get<std::string>(), doc.at("options").get<std::string>(),
                                     doc.at("answer").get<std::string>(), doc.at("knowledge").get<std::string>()});
    }
    tmpl.demonstration_count = tmpl.demonstrations.size();
  }
  tmpl.validate();
  return tmpl;
}

llm::ChatRequest build_generation_prompt(const GenerationPromptTemplate& tmpl, const McqExample& example,
                                         const std::optional<std::string>& context, const llm::Decoding& decoding) {
  tmpl.validate();
  std::string demos;
  for (const auto& demo : tmpl.demonstrations) {
    if (!demos.empty()) {
      demos += "\n\n";
    }
    demos += render_demonstration(demo);
  }
  std::string user = tmpl.user_template;
  replace_all(user, kSlotQuestion, example.question_text());
  replace_all(user, kSlotOptions, llm::render_options(example));
  replace_all(user, kSlotAnswer, example.golden_labels().to_string());
  replace_all(user, kSlotDemonstrations, demos);
  if (context) {
    user = std::string(kContextHeader) + "\n" + *context + "\n\n" + user;
  }
  llm::ChatRequest request;
  request.messages = {{llm::Role::System, tmpl.system_text}, {llm::Role::User, std::move(user)}};
  request.decoding = decoding;
  return request;
}

namespace {

std::string checkpoint_key(const std::string& id, std::size_t sample) { return id + "#" + std::to_string(sample); }

std::map<std::string, KnowledgeRecord> read_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, KnowledgeRecord> done;
  if (!std::filesystem::exists(path)) {
    return done;
  }
  std::istringstream lines(io::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    // A torn final line from an interrupted writer is ignored.
    if (doc.is_discarded()) continue;
    const std::string key = checkpoint_key(doc.at("example_id").get<std::string>(), doc.value("sample", std::size_t{0}));
    if (doc.value("status", std::string()) == "ok") {
      done.insert_or_assign(key, knowledge_record_from_json(doc.at("record")));
    } else {
      done.erase(key);
    }
  }
  return done;
}

}  // namespace

GenerationResult generate_candidates(llm::ChatClient& client, const GenerationPromptTemplate& tmpl,
                                     const std::vector<McqExample>& examples, const GenerationOptions& options) {
  if (examples.empty()) {
    throw Error(Errc::EmptyInput, "no examples to generate knowledge for");
  }
  if (options.samples_per_question == 0) {
    throw Error(Errc::InvalidConfig, "samples_per_question must be at least 1");
  }
  tmpl.validate();
  const auto clock = options.clock ? options.clock : std::function<std::string()>(io::utc_timestamp);

  std::map<std::string, KnowledgeRecord> done;
  if (options.checkpoint) {
    if (options.resume) {
      done = read_checkpoint(*options.checkpoint);
    } else if (std::filesystem::exists(*options.checkpoint)) {
      std::filesystem::remove(*options.checkpoint);
    }
  }

  struct Job {
    std::size_t example;
    std::size_t sample;
  };
  std::vector<Job> jobs;
  const std::size_t slots = examples.size() * options.samples_per_question;
  std::vector<std::optional<KnowledgeRecord>> results(slots);
  GenerationResult result;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    for (std::size_t s = 0; s < options.samples_per_question; ++s) {
      const auto it = done.find(checkpoint_key(examples[e].id(), s));
      if (it != done.end()) {
        results[e * options.samples_per_question + s] = it->second;
        ++result.resumed;
      } else {
        jobs.push_back({e, s});
      }
    }
  }

  std::mutex mutex;
  parallel_for(jobs.size(), options.concurrency, [&](std::size_t j) {
    const auto [e, s] = jobs[j];
    const McqExample& example = examples[e];
    nlohmann::json entry = {{"example_id", example.id()}, {"sample", s}};
    try {
      std::optional<std::string> context;
      if (options.context != nullptr) {
        context = options.context->context_for(example);
      }
      const auto request = build_generation_prompt(tmpl, example, context, options.decoding);
      auto record = make_knowledge_record(example.id(), client.complete(request), client.id(), clock());
      entry["status"] = "ok";
      entry["record"] = to_json(record);
      std::lock_guard lock(mutex);
      results[e * options.samples_per_question + s] = std::move(record);
      ++result.generated;
      if (options.checkpoint) io::append_line(*options.checkpoint, entry.dump());
    } catch (const std::exception& ex) {
      entry["status"] = "failed";
      entry["error"] = ex.what();
      std::lock_guard lock(mutex);
      result.failures.push_back({example.id(), s, ex.what()});
      if (options.checkpoint) io::append_line(*options.checkpoint, entry.dump());
    }
  });

  for (auto& slot : results) {
    if (slot) {
      result.records.push_back(std::move(*slot));
    }
  }
  std::sort(result.failures.begin(), result.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.example_id, a.sample) < std::tie(b.example_id, b.sample);
  });
  return result;
}

bool consistency_check(llm::ChatClient& client, const McqExample& example, const std::string& knowledge,
                       bool multi_answer) {
  if (io::trim(knowledge).empty()) {
    throw Error(Errc::ValidationError, "consistency check needs non-empty knowledge");
  }
  const std::string completion = client.complete(llm::build_answer_prompt(example, knowledge));
  return eval::score_example(example, eval::extract_answer(completion, example.option_labels(), multi_answer)).correct;
}

VerificationStats verify_records(llm::ChatClient& client, const std::vector<McqExample>& examples,
                                 std::vector<KnowledgeRecord>& records, int concurrency) {
  std::map<std::string, const McqExample*> by_id;
  for (const auto& example : examples) {
    by_id.emplace(example.id(), &example);
  }
  const bool multi =
      std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.is_multi_answer(); });
  std::atomic<std::size_t> verified{0};
  std::atomic<std::size_t> unverified{0};
  parallel_for(records.size(), concurrency, [&](std::size_t i) {
    auto& record = records[i];
    const auto it = by_id.find(record.example_id);
    if (it == by_id.end()) {
      throw Error(Errc::ValidationError, "record refers to unknown example " + record.example_id);
    }
    try {
      record.consistency_verdict = consistency_check(client, *it->second, record.knowledge_text, multi);
      ++verified;
    } catch (const Error& e) {
      if (e.code() == Errc::ValidationError) throw;
      record.consistency_verdict.reset();
      ++unverified;
    }
  });
  return {verified.load(), unverified.load()};
}

EmitStats filter_and_emit(const std::vector<KnowledgeRecord>& records, const std::vector<McqExample>& examples,
                          const std::string& instruction, const std::filesystem::path& out_path) {
  std::map<std::string, const McqExample*> by_id;
  for (const auto& example : examples) {
    by_id.emplace(example.id(), &example);
  }
  EmitStats stats;
  std::set<std::string> emitted;
  std::string out;
  for (const auto& record : records) {
    if (!record.consistency_verdict) {
      ++stats.unverified;
      continue;
    }
    if (!*record.consistency_verdict || emitted.count(record.example_id) != 0) {
      ++stats.dropped;
      continue;
    }
    const auto it = by_id.find(record.example_id);
    if (it == by_id.end()) {
      throw Error(Errc::ValidationError, "record refers to unknown example " + record.example_id);
    }
    nlohmann::ordered_json line;
    line["instruction"] = instruction;
    line["input"] = it->second->question_text();
    line["output"] = record.knowledge_text;
    line["source_id"] = record.example_id;
    out += line.dump();
    out += '\n';
    emitted.insert(record.example_id);
    ++stats.kept;
  }
  io::atomic_write(out_path, out);
  return stats;
}

void write_candidates(const std::filesystem::path& path, const std::vector<KnowledgeRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    out += to_json(record).dump();
    out += '\n';
  }
  io::atomic_write(path, out);
}

std::vector<KnowledgeRecord> read_candidates(const std::filesystem::path& path) {
  std::istringstream lines(io::read_file(path));
  std::vector<KnowledgeRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(Errc::ParseError, "invalid JSON in candidates file", line_no);
    }
    try {
      records.push_back(knowledge_record_from_json(doc));
    } catch (const std::exception& e) {
      throw Error(Errc::ValidationError, e.what(), line_no);
    }
  }
  return records;
}

}  // namespace blade::kit
