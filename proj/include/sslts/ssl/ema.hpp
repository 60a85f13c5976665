#pragma once

#include <cstdint>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/nn/param.hpp"

namespace sslts::ssl {

// Momentum schedule for the teacher: constant when steps == 0, otherwise
// linear from start to end over `steps` updates.
struct EmaSchedule {
  double start = 0.999;
  double end = 0.999;
  int64_t steps = 0;

  double at(int64_t step) const {
    if (steps <= 0 || step >= steps) return steps <= 0 ? start : end;
    const double f = static_cast<double>(step) / static_cast<double>(steps);
    return start + (end - start) * f;
  }
};

// teacher = m*teacher + (1-m)*student, elementwise. m == 1 is a strict no-op
// so a frozen teacher stays bitwise identical; m == 0 copies.
template <class T>
void ema_blend(Tensor<T>& teacher, const Tensor<T>& student, double m) {
  if (!teacher.same_shape(student)) throw DataError("ema update: shape mismatch");
  if (m == 1.0) return;
  if (m == 0.0) {
    teacher = student;
    return;
  }
  const T tm = static_cast<T>(m), sm = static_cast<T>(1.0 - m);
  T* tp = teacher.data();
  const T* sp = student.data();
  for (int64_t i = 0; i < teacher.numel(); ++i) tp[i] = tm * tp[i] + sm * sp[i];
}

template <class T>
void ema_update_params(std::vector<nn::NamedParam<T>>& teacher,
                       const std::vector<nn::NamedParam<T>>& student, double m) {
  if (teacher.size() != student.size()) throw DataError("ema update: parameter count mismatch");
  for (size_t i = 0; i < teacher.size(); ++i)
    ema_blend(teacher[i].var->value, student[i].var->value, m);
}

template <class T>
void ema_update_state(std::vector<nn::NamedState<T>>& teacher,
                      const std::vector<nn::NamedState<T>>& student, double m) {
  if (teacher.size() != student.size()) throw DataError("ema update: state count mismatch");
  for (size_t i = 0; i < teacher.size(); ++i) ema_blend(*teacher[i].tensor, *student[i].tensor, m);
}

// Marks every parameter non-trainable; teacher networks receive no gradients.
template <class T>
void freeze_params(const std::vector<nn::NamedParam<T>>& params) {
  for (const auto& p : params) p.var->requires_grad = false;
}

}  // namespace sslts::ssl
