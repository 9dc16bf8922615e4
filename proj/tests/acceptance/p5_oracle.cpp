// Co-move measurement against a generator that follows its heatmaps exactly.
#include "checker.hpp"
#include "criteria.hpp"
#include "spatialgan/evaluation.hpp"

namespace acceptance {

using namespace spatialgan;

bool p5(const Context&, std::ostream& detail) {
  Checker check(detail);
  evaluation::DiscRenderer renderer(32, 3.0);
  evaluation::OracleSegmenter oracle;
  Rng rng(5);
  const auto result = evaluation::comove_ratio(renderer, oracle, {200, 0.0}, rng);
  detail << "mean " << result.mean << " over " << result.count << " trials (" << result.skipped << " skipped); ";
  check(result.mean >= 0.98 && result.mean <= 1.02, "mean outside [0.98, 1.02]");
  check(result.count + result.skipped == 200, "trial accounting");
  check(result.count >= 190, "too many skipped trials");
  return check.pass();
}

}  // namespace acceptance
