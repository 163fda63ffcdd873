#include "lenopt/pipeline.hpp"

#include <cctype>
#include <charconv>
#include <utility>

#include "lenopt/errors.hpp"

namespace lenopt::distill {

namespace {

constexpr std::string_view kArrowUtf8 = "\xE2\x86\x92";  // →

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  PipelineSpec parse() {
    PipelineSpec spec;
    skip_ws();
    if (at_end()) throw ParseError("empty pipeline", pos_);
    bool seen_student = false;
    while (true) {
      skip_ws();
      const std::size_t section_start = pos_;
      enum class Role { Student, Teacher } role = Role::Student;
      if (consume_label("teacher")) {
        role = Role::Teacher;
      } else {
        consume_label("student");
      }
      auto steps = parse_steps();
      if (role == Role::Teacher) {
        if (!spec.teacher_steps.empty())
          throw ParseError("teacher pipeline given twice", section_start);
        spec.teacher_steps = std::move(steps);
      } else {
        if (seen_student) throw ParseError("student pipeline given twice", section_start);
        spec.steps = std::move(steps);
        seen_student = true;
      }
      skip_ws();
      if (at_end()) break;
      if (text_[pos_] != ';') throw ParseError("expected '->' or ';'", pos_);
      ++pos_;
    }
    if (!seen_student) throw ParseError("missing student pipeline", text_.size());
    return spec;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  // Case-insensitive word match tolerating whitespace inside the input.
  bool match_word(std::string_view word, std::size_t& end) const {
    std::size_t p = pos_;
    for (char c : word) {
      while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p])) && c != ' ') ++p;
      if (c == ' ') continue;
      if (p >= text_.size() ||
          std::tolower(static_cast<unsigned char>(text_[p])) != std::tolower(static_cast<unsigned char>(c)))
        return false;
      ++p;
    }
    end = p;
    return true;
  }

  bool consume_label(std::string_view label) {
    std::size_t end = 0;
    if (!match_word(label, end)) return false;
    std::size_t p = end;
    while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
    if (p >= text_.size() || text_[p] != ':') return false;
    pos_ = p + 1;
    return true;
  }

  std::vector<PipelineStep> parse_steps() {
    std::vector<PipelineStep> steps;
    while (true) {
      steps.push_back(parse_step());
      skip_ws();
      if (at_end() || text_[pos_] == ';') break;
      if (text_.substr(pos_, 2) == "->") {
        pos_ += 2;
      } else if (text_.substr(pos_, kArrowUtf8.size()) == kArrowUtf8) {
        pos_ += kArrowUtf8.size();
      } else {
        throw ParseError("malformed arrow, expected '->' or '\xE2\x86\x92'", pos_);
      }
    }
    return steps;
  }

  PipelineStep parse_step() {
    skip_ws();
    if (!at_end() && text_[pos_] == '(') {
      const std::size_t open = pos_++;
      skip_ws();
      const std::size_t digits = pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (digits == pos_) throw ParseError("expected step number after '('", pos_);
      skip_ws();
      if (at_end() || text_[pos_] != ')') throw ParseError("unclosed step number", open);
      ++pos_;
      skip_ws();
    }
    PipelineStep step;
    step.method = parse_method();
    expect_comma();
    step.epochs = parse_epochs();
    expect_comma();
    step.length_drop = parse_flag();
    return step;
  }

  Method parse_method() {
    const std::size_t start = pos_;
    std::size_t end = 0;
    if (match_word("BERT fine-tuning", end)) {
      pos_ = end;
      return Method::FT;
    }
    for (auto [word, m] : {std::pair{"ID", Method::ID}, std::pair{"PD", Method::PD},
                           std::pair{"FT", Method::FT}}) {
      if (match_word(word, end)) {
        std::size_t p = end;
        while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
        if (p < text_.size() && text_[p] == ',') {
          pos_ = end;
          return m;
        }
      }
    }
    throw ParseError("unknown training method, expected ID, PD, FT or 'BERT fine-tuning'", start);
  }

  void expect_comma() {
    skip_ws();
    if (at_end() || text_[pos_] != ',') throw ParseError("expected ','", pos_);
    ++pos_;
    skip_ws();
  }

  int parse_epochs() {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
    if (end == start) throw ParseError("epochs must be a non-negative integer", start);
    int value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + end, value);
    if (ec != std::errc{} || ptr != text_.data() + end) throw ParseError("epoch count out of range", start);
    if (value < 1) throw ParseError("epochs must be at least 1", start);
    pos_ = end;
    return value;
  }

  bool parse_flag() {
    if (at_end()) throw ParseError("expected LengthDrop flag T or F", pos_);
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text_[pos_])));
    if (c != 'T' && c != 'F') throw ParseError("expected LengthDrop flag T or F", pos_);
    ++pos_;
    if (!at_end() && std::isalnum(static_cast<unsigned char>(text_[pos_])))
      throw ParseError("expected LengthDrop flag T or F", pos_ - 1);
    return c == 'T';
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string format_steps(const std::vector<PipelineStep>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += " -> ";
    out += "(" + std::to_string(i + 1) + ") ";
    out += method_name(steps[i].method);
    out += "," + std::to_string(steps[i].epochs) + "," + (steps[i].length_drop ? "T" : "F");
  }
  return out;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ID: return "ID";
    case Method::PD: return "PD";
    case Method::FT: return "FT";
  }
  return "?";
}

PipelineSpec parse_pipeline(std::string_view text) { return Parser(text).parse(); }

std::string format_pipeline(const PipelineSpec& spec) {
  if (!spec.has_teacher_pipeline()) return format_steps(spec.steps);
  return "teacher: " + format_steps(spec.teacher_steps) + "; student: " + format_steps(spec.steps);
}

std::vector<std::string> variant_names() { return {"naive", "v1", "v2", "v3", "v4"}; }

std::optional<std::string> variant_pipeline(std::string_view name) {
  if (name == "naive") return "(1) ID,20,F -> (2) PD,10,F -> PD,10,T";
  if (name == "v1") return "(1) ID,20,F -> (2) PD,20,T";
  if (name == "v2") return "(1) ID,10,F -> (2) PD,3,F -> (3) PD,10,T";
  if (name == "v3") return "(1) ID,20,T -> (2) PD,10,T";
  if (name == "v4")
    return "teacher: (1) BERT fine-tuning,2,F -> (2) BERT fine-tuning,5,T; "
           "student: (1) ID,20,F -> (2) PD,10,F";
  return std::nullopt;
}

}  // namespace lenopt::distill
