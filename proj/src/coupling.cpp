#include "msbm/coupling.hpp"

#include <stdexcept>
#include <string>

namespace msbm {

void IntervalCoupling::validate() const {
  if (interval < 1) throw std::invalid_argument("IntervalCoupling: interval index must be >= 1");
  if (left.rows() < 1 || left.rows() != right.rows()) {
    throw std::invalid_argument("IntervalCoupling: left/right must pair m >= 1 rows");
  }
  if (left.cols() != right.cols()) {
    throw std::invalid_argument("IntervalCoupling: endpoint dimension mismatch");
  }
  if (!left.allFinite() || !right.allFinite()) {
    throw std::invalid_argument("IntervalCoupling: non-finite sample");
  }
}

void validate_chain(const std::vector<IntervalCoupling>& couplings, int num_intervals) {
  if (static_cast<int>(couplings.size()) != num_intervals) {
    throw std::invalid_argument("expected one coupling per interval, got " +
                                std::to_string(couplings.size()));
  }
  for (int i = 0; i < num_intervals; ++i) {
    const IntervalCoupling& c = couplings[static_cast<std::size_t>(i)];
    c.validate();
    if (c.interval != i + 1) {
      throw std::invalid_argument("couplings must be ordered by interval index");
    }
  }
}

}  // namespace msbm
