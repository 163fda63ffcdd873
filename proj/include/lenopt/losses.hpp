#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "lenopt/encoder.hpp"

namespace lenopt::distill {

using ad::Tensor;
using model::ForwardTrace;

/// (student layer, teacher layer) pairs.
using LayerMap = std::vector<std::pair<std::size_t, std::size_t>>;

/// Student layer i (0-based) ↔ teacher layer (i+1)·T/S − 1, so the last
/// student layer always meets the last teacher layer.
LayerMap uniform_layer_map(int student_layers, int teacher_layers);

/// Mean over mapped pairs of mse(student_hidden · projection, teacher_hidden)
/// plus mse(student_attention, teacher_attention) averaged over heads.
///
/// Only the positions the student kept at a layer are compared; the teacher
/// rows are gathered at those positions and its attention restricted to them
/// (rows renormalized when the teacher saw more tokens). A skipped student
/// layer contributes only its hidden term. An undefined projection means identity.
Tensor id_loss(const ForwardTrace& student, const ForwardTrace& teacher, const LayerMap& layer_map,
               const Tensor& projection);

/// Soft cross-entropy −Σ softmax(t/T)·log softmax(s/T) per row, averaged over
/// rows. Each row is one distribution.
Tensor pd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

/// pd_loss over span logits [n × 2]: one distribution over positions for the
/// start column and one for the end column.
Tensor span_pd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

/// Mean row entropy of softmax(t/T); pd_loss equals this at coincidence.
double row_entropy(const Tensor& teacher_logits, double temperature);

/// Hard-label span cross-entropy, averaged over the start and end columns.
Tensor span_ce_loss(const Tensor& logits, int gold_start, int gold_end);

/// Copy of a trace with every tensor detached from the tape.
ForwardTrace detach_trace(const ForwardTrace& trace);

}  // namespace lenopt::distill
