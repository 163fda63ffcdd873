#pragma once

// Training pipelines in the notation "(1) ID,20,F -> (2) PD,10,F -> PD,10,T".
//
// A step is METHOD,EPOCHS,LENGTHDROP. METHOD is ID, PD or FT ("BERT
// fine-tuning" is accepted as FT); LENGTHDROP is T or F in either case.
// Steps are joined by "->" or "→" and may carry a "(n)" ordinal. Whitespace
// is ignored. A pipeline that also trains its teacher is written as
// "teacher: <steps>; student: <steps>".

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lenopt::distill {

enum class Method { ID, PD, FT };

std::string_view method_name(Method m);

struct PipelineStep {
  Method method = Method::ID;
  int epochs = 1;
  bool length_drop = false;

  bool operator==(const PipelineStep&) const = default;
};

struct PipelineSpec {
  std::vector<PipelineStep> steps;
  /// Steps applied to the teacher before any student step; empty when the
  /// teacher is used as given.
  std::vector<PipelineStep> teacher_steps;

  bool has_teacher_pipeline() const { return !teacher_steps.empty(); }
  bool operator==(const PipelineSpec&) const = default;
};

/// Throws ParseError carrying the character offset of the problem.
PipelineSpec parse_pipeline(std::string_view text);

/// Canonical text form; parse_pipeline(format_pipeline(s)) == s.
std::string format_pipeline(const PipelineSpec& spec);

/// Named training procedures: naive, v1, v2, v3, v4.
std::vector<std::string> variant_names();
/// Pipeline text for a named variant; nullopt for unknown names.
std::optional<std::string> variant_pipeline(std::string_view name);

}  // namespace lenopt::distill
