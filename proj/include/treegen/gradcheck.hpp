#pragma once

#include <functional>
#include <string>

#include "treegen/params.hpp"
#include "treegen/tensor.hpp"

namespace treegen {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "param[index]" of the largest error
  long entries_checked = 0;
  bool ok(double tol) const { return entries_checked > 0 && max_rel_err < tol; }
};

// Central finite differences of a scalar loss against the analytic gradients
// from one backward sweep. `loss` must rebuild the graph on every call and be
// deterministic (run forward passes with training=false). Checks up to
// `max_entries_per_param` strided entries of each registered parameter.
GradCheckReport check_gradients(ParamStore& params, const std::function<Tensor()>& loss,
                                int max_entries_per_param = 0 /* 0 = all */,
                                double fd_step = 1e-5);

// End-to-end check on a micro model (width 4, one block per stage, a three
// rule derivation, three description tokens) covering every parameter.
GradCheckReport gradcheck_micro(std::uint64_t seed = 1);

}  // namespace treegen
