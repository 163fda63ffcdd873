#include "lenopt/task.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "lenopt/errors.hpp"

namespace lenopt::eval {

SpanTask SpanTask::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > examples.size())
    throw ContractError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") outside task of " + std::to_string(examples.size()) + " examples");
  SpanTask out{{}, vocab, seq_len, seed};
  out.examples.assign(examples.begin() + static_cast<std::ptrdiff_t>(begin),
                      examples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

SpanTask generate_task(std::uint64_t seed, int n_examples, int seq_len, int vocab) {
  if (seq_len < 4) throw ParameterError("seq_len must be at least 4, got " + std::to_string(seq_len));
  if (vocab <= kFirstContentToken)
    throw ParameterError("vocab of " + std::to_string(vocab) +
                         " leaves no content tokens beside CLS and the two markers");
  if (n_examples < 0) throw ParameterError("n_examples must be non-negative");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> content(kFirstContentToken, vocab - 1);
  const int max_span = std::max(1, std::min(seq_len - 3, seq_len / 8));

  SpanTask task{{}, vocab, seq_len, seed};
  task.examples.reserve(static_cast<std::size_t>(n_examples));
  for (int e = 0; e < n_examples; ++e) {
    const int len = std::uniform_int_distribution<int>(1, max_span)(rng);
    // open marker at start-1 >= 1, close marker at start+len <= seq_len-1
    const int start = std::uniform_int_distribution<int>(2, seq_len - 1 - len)(rng);
    SpanExample ex;
    ex.tokens.resize(static_cast<std::size_t>(seq_len));
    for (auto& t : ex.tokens) t = content(rng);
    ex.tokens[0] = kClsToken;
    ex.tokens[static_cast<std::size_t>(start - 1)] = kOpenMarker;
    ex.tokens[static_cast<std::size_t>(start + len)] = kCloseMarker;
    ex.start = start - 1;
    ex.end = start + len;
    task.examples.push_back(std::move(ex));
  }
  return task;
}

void validate_task(const SpanTask& task) {
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    const auto& ex = task.examples[i];
    const int n = static_cast<int>(ex.tokens.size());
    if (!(0 <= ex.start && ex.start <= ex.end && ex.end < n))
      throw ContractError("example " + std::to_string(i) + " has span [" +
                          std::to_string(ex.start) + ", " + std::to_string(ex.end) +
                          "] outside 0.." + std::to_string(n - 1));
  }
}

void save_task_jsonl(const SpanTask& task, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& ex : task.examples) {
    nlohmann::json row{{"tokens", ex.tokens}, {"start", ex.start}, {"end", ex.end}};
    out << row.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SpanTask load_task_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open task file " + path.string());
  SpanTask task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto row = nlohmann::json::parse(line);
      SpanExample ex;
      ex.tokens = row.at("tokens").get<std::vector<int>>();
      ex.start = row.at("start").get<int>();
      ex.end = row.at("end").get<int>();
      for (int t : ex.tokens)
        if (t < 0) throw IoError("negative token id");
      task.vocab = std::max(task.vocab, ex.tokens.empty() ? 0 : *std::max_element(ex.tokens.begin(), ex.tokens.end()) + 1);
      task.seq_len = std::max(task.seq_len, static_cast<int>(ex.tokens.size()));
      task.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    validate_task(task);
  } catch (const ContractError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return task;
}

}  // namespace lenopt::eval
