#pragma once

#include <functional>
#include <memory>

#include "cbmt/model.hpp"
#include "cbmt/snapshot.hpp"

namespace cbmt {

using ModelBuilder = std::function<std::unique_ptr<ModelAdapter>()>;

// Teacher and student share one architecture; the teacher is never trained
// by backprop, only tracked as the EMA of the student.
struct TeacherStudentPair {
  std::unique_ptr<ModelAdapter> teacher;
  std::unique_ptr<ModelAdapter> student;
  double lambda_ema = 0.98;
  bool ema_include_buffers = true;
  int64_t step = 0;
};

// Both models initialized from the source checkpoint; throws with the key
// diff when the checkpoint does not match the architecture.
TeacherStudentPair init_pair(const ParamSnapshot& source_checkpoint, const ModelBuilder& builder,
                             double lambda_ema, bool ema_include_buffers = true);

// teacher <- lambda * teacher + (1 - lambda) * student, elementwise over
// every entry (normalization buffers are EMA'd too unless configured off, in
// which case they are copied from the student). Throws on non-finite results,
// naming the parameter.
void ema_update(TeacherStudentPair& pair);

}  // namespace cbmt
