#include "lenopt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "lenopt/errors.hpp"

namespace lenopt::distill {

namespace {

// Teacher attention restricted to `rows` (indices into the teacher's own
// kept list), with each row renormalized to sum to 1.
Tensor restrict_attention(const Tensor& attn, const std::vector<std::size_t>& rows) {
  const std::size_t n = attn.cols();
  const std::size_t k = rows.size();
  if (k == n) return attn;
  std::vector<double> out(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += attn.at(rows[i], rows[j]);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = attn.at(rows[i], rows[j]) / total;
  }
  return Tensor({k, k}, std::move(out));
}

}  // namespace

LayerMap uniform_layer_map(int student_layers, int teacher_layers) {
  if (student_layers < 1 || teacher_layers < 1)
    throw ParameterError("layer counts must be positive");
  if (teacher_layers < student_layers)
    throw ParameterError("teacher has fewer layers (" + std::to_string(teacher_layers) +
                         ") than the student (" + std::to_string(student_layers) + ")");
  LayerMap map;
  for (int i = 0; i < student_layers; ++i)
    map.emplace_back(static_cast<std::size_t>(i),
                     static_cast<std::size_t>((i + 1) * teacher_layers / student_layers - 1));
  return map;
}

Tensor id_loss(const ForwardTrace& student, const ForwardTrace& teacher, const LayerMap& layer_map,
               const Tensor& projection) {
  if (layer_map.empty()) throw ParameterError("id_loss needs at least one mapped layer pair");
  Tensor total;
  for (const auto& [si, ti] : layer_map) {
    if (si >= student.hidden.size() || ti >= teacher.hidden.size())
      throw ParameterError("layer pair (" + std::to_string(si) + ", " + std::to_string(ti) +
                           ") outside the traces");
    const auto& s_kept = student.kept[si];
    const auto& t_kept = teacher.kept[ti];
    std::unordered_map<std::size_t, std::size_t> where;
    for (std::size_t r = 0; r < t_kept.size(); ++r) where.emplace(t_kept[r], r);
    std::vector<std::size_t> rows;
    rows.reserve(s_kept.size());
    for (std::size_t pos : s_kept) {
      auto it = where.find(pos);
      if (it == where.end())
        throw ContractError("teacher layer " + std::to_string(ti) + " dropped position " +
                            std::to_string(pos) + " that student layer " + std::to_string(si) +
                            " kept");
      rows.push_back(it->second);
    }
    const bool same_rows = rows.size() == t_kept.size();

    Tensor s_hidden = student.hidden[si];
    if (projection.defined()) s_hidden = ad::matmul(s_hidden, projection);
    const Tensor& t_full = teacher.hidden[ti];
    Tensor t_hidden = same_rows ? t_full : ad::gather_rows(t_full, rows);
    if (s_hidden.shape() != t_hidden.shape())
      throw DimensionError("id_loss: student hidden " + ad::shape_str(s_hidden.shape()) +
                           " vs teacher hidden " + ad::shape_str(t_hidden.shape()) +
                           " at pair (" + std::to_string(si) + ", " + std::to_string(ti) + ")");
    Tensor term = ad::mse(s_hidden, t_hidden);

    const auto& s_attn = student.attention[si];
    const auto& t_attn = teacher.attention[ti];
    if (!s_attn.empty()) {
      if (s_attn.size() != t_attn.size())
        throw DimensionError("id_loss: student has " + std::to_string(s_attn.size()) +
                             " heads, teacher layer has " + std::to_string(t_attn.size()));
      Tensor attn_sum;
      for (std::size_t h = 0; h < s_attn.size(); ++h) {
        Tensor target = same_rows ? t_attn[h] : restrict_attention(t_attn[h], rows);
        Tensor e = ad::mse(s_attn[h], target);
        attn_sum = attn_sum.defined() ? ad::add(attn_sum, e) : e;
      }
      term = ad::add(term, ad::scale(attn_sum, 1.0 / static_cast<double>(s_attn.size())));
    }
    total = total.defined() ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0 / static_cast<double>(layer_map.size()));
}

Tensor pd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  if (student_logits.shape() != teacher_logits.shape())
    throw DimensionError("pd_loss: student logits " + ad::shape_str(student_logits.shape()) +
                         " vs teacher logits " + ad::shape_str(teacher_logits.shape()));
  if (!(temperature > 0.0)) throw ParameterError("pd_loss temperature must be positive");
  Tensor target = ad::softmax_rows(teacher_logits.detach(), temperature);
  Tensor logp = ad::log_softmax_rows(student_logits, temperature);
  const std::size_t rows = student_logits.size() / student_logits.shape().back();
  return ad::scale(ad::sum(ad::mul(target, logp)), -1.0 / static_cast<double>(rows));
}

Tensor span_pd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                    double temperature) {
  return pd_loss(ad::transpose(student_logits), ad::transpose(teacher_logits), temperature);
}

double row_entropy(const Tensor& teacher_logits, double temperature) {
  Tensor p = ad::softmax_rows(teacher_logits.detach(), temperature);
  Tensor logp = ad::log_softmax_rows(teacher_logits.detach(), temperature);
  const std::size_t n = p.shape().back();
  const std::size_t rows = p.size() / n;
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) h -= p[i] * logp[i];
  return h / static_cast<double>(rows);
}

Tensor span_ce_loss(const Tensor& logits, int gold_start, int gold_end) {
  if (logits.dim() != 2 || logits.cols() != 2)
    throw DimensionError("span logits must be n x 2, got " + ad::shape_str(logits.shape()));
  const int n = static_cast<int>(logits.rows());
  if (gold_start < 0 || gold_end < gold_start || gold_end >= n)
    throw ContractError("gold span [" + std::to_string(gold_start) + ", " +
                        std::to_string(gold_end) + "] invalid for " + std::to_string(n) +
                        " positions");
  Tensor onehot({2, logits.rows()});
  onehot.mutable_data()[static_cast<std::size_t>(gold_start)] = 1.0;
  onehot.mutable_data()[logits.rows() + static_cast<std::size_t>(gold_end)] = 1.0;
  Tensor logp = ad::log_softmax_rows(ad::transpose(logits));
  return ad::scale(ad::sum(ad::mul(logp, onehot)), -0.5);
}

ForwardTrace detach_trace(const ForwardTrace& trace) {
  ForwardTrace out;
  out.kept = trace.kept;
  out.logits = trace.logits.detach();
  for (const auto& h : trace.hidden) out.hidden.push_back(h.detach());
  for (const auto& layer : trace.attention) {
    std::vector<Tensor> heads;
    for (const auto& a : layer) heads.push_back(a.detach());
    out.attention.push_back(std::move(heads));
  }
  return out;
}

}  // namespace lenopt::distill
