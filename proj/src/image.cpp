#include "flowvo/image.hpp"

#include <algorithm>

namespace flowvo {

double DepthMap::median() const {
  std::vector<double> vals;
  vals.reserve(depth.size());
  for (size_t i = 0; i < depth.size(); ++i) {
    if (valid[i]) vals.push_back(depth[i]);
  }
  if (vals.empty()) return 0.0;
  std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
  return vals[vals.size() / 2];
}

}  // namespace flowvo
