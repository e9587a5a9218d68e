#include "cbmt/meanteacher.hpp"

#include <cmath>
#include <stdexcept>

namespace cbmt {

TeacherStudentPair init_pair(const ParamSnapshot& source_checkpoint, const ModelBuilder& builder,
                             double lambda_ema, bool ema_include_buffers) {
  if (lambda_ema < 0.0 || lambda_ema > 1.0)
    throw std::invalid_argument("init_pair: lambda_ema out of [0,1]");
  TeacherStudentPair pair;
  pair.teacher = builder();
  pair.student = builder();
  pair.lambda_ema = lambda_ema;
  pair.ema_include_buffers = ema_include_buffers;
  pair.step = 0;
  require_compatible(pair.teacher->read_params(), source_checkpoint);
  pair.teacher->write_params(source_checkpoint);
  pair.student->write_params(source_checkpoint);
  return pair;
}

void ema_update(TeacherStudentPair& pair) {
  const double lambda = pair.lambda_ema;
  ParamSnapshot teacher = pair.teacher->read_params();
  const ParamSnapshot student = pair.student->read_params();
  if (teacher.entries.size() != student.entries.size())
    throw std::logic_error("ema_update: teacher/student entry count mismatch");

  for (size_t e = 0; e < teacher.entries.size(); ++e) {
    ParamEntry& t = teacher.entries[e];
    const ParamEntry& s = student.entries[e];
    if (t.name != s.name || t.values.size() != s.values.size())
      throw std::logic_error("ema_update: snapshot layout mismatch at '" + t.name + "'");

    if (t.is_buffer && !pair.ema_include_buffers) {
      t.values = s.values;  // track the student's statistics directly
    } else {
      for (size_t i = 0; i < t.values.size(); ++i) {
        const double v = lambda * t.values[i] + (1.0 - lambda) * s.values[i];
        t.values[i] = static_cast<float>(v);
      }
    }
    for (float v : t.values)
      if (!std::isfinite(v))
        throw std::runtime_error("ema_update: non-finite value in parameter '" + t.name + "'");
  }
  ++pair.step;
  teacher.step = pair.step;
  pair.teacher->write_params(teacher);
}

}  // namespace cbmt
