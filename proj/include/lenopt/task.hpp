#pragma once

// Synthetic span-extraction task. Every sequence starts with a CLS token and
// hides one answer span between an opening and a closing marker; the rest is
// random content. The gold span runs from the opening marker through the
// closing marker, both inclusive.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lenopt::eval {

inline constexpr int kClsToken = 0;
inline constexpr int kOpenMarker = 1;
inline constexpr int kCloseMarker = 2;
inline constexpr int kFirstContentToken = 3;

struct SpanExample {
  std::vector<int> tokens;
  int start = 0;
  int end = 0;  // inclusive

  bool operator==(const SpanExample&) const = default;
};

struct SpanTask {
  std::vector<SpanExample> examples;
  int vocab = 0;
  int seq_len = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  /// Examples [begin, end) as a new task with the same metadata.
  SpanTask slice(std::size_t begin, std::size_t end) const;

  bool operator==(const SpanTask&) const = default;
};

/// Throws ParameterError when seq_len < 4 or vocab leaves no room for content tokens.
SpanTask generate_task(std::uint64_t seed, int n_examples, int seq_len, int vocab);

/// Throws ContractError if an example breaks 0 <= start <= end < len(tokens).
void validate_task(const SpanTask& task);

/// One JSON object per line: {"tokens": [...], "start": s, "end": e}.
void save_task_jsonl(const SpanTask& task, const std::filesystem::path& path);
/// vocab and seq_len are inferred (max token + 1, longest sequence). Throws IoError.
SpanTask load_task_jsonl(const std::filesystem::path& path);

}  // namespace lenopt::eval
