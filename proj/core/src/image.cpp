#include "cgn/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace cgn {

double iou(const BBox& a, const BBox& b) {
  const int r0 = std::max(a.row, b.row);
  const int c0 = std::max(a.col, b.col);
  const int r1 = std::min(a.row + a.height, b.row + b.height);
  const int c1 = std::min(a.col + a.width, b.col + b.width);
  const long long inter =
      static_cast<long long>(std::max(0, r1 - r0)) * std::max(0, c1 - c0);
  const long long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Components connected_components(const ImageU8& mask) {
  Components out;
  out.labels.assign(static_cast<size_t>(mask.rows) * mask.cols, 0);
  int next = 0;
  std::vector<int> stack;
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      const int idx = r * mask.cols + c;
      if (mask.px[static_cast<size_t>(idx)] == 0 || out.labels[static_cast<size_t>(idx)] != 0)
        continue;
      ++next;
      int size = 0;
      stack.clear();
      stack.push_back(idx);
      out.labels[static_cast<size_t>(idx)] = next;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++size;
        const int cr = cur / mask.cols;
        const int cc = cur % mask.cols;
        const int nbr[4][2] = {{cr - 1, cc}, {cr + 1, cc}, {cr, cc - 1}, {cr, cc + 1}};
        for (auto& n : nbr) {
          if (n[0] < 0 || n[0] >= mask.rows || n[1] < 0 || n[1] >= mask.cols) continue;
          const int ni = n[0] * mask.cols + n[1];
          if (mask.px[static_cast<size_t>(ni)] != 0 && out.labels[static_cast<size_t>(ni)] == 0) {
            out.labels[static_cast<size_t>(ni)] = next;
            stack.push_back(ni);
          }
        }
      }
      out.sizes.push_back(size);
    }
  }
  return out;
}

ImageU8 largest_component(const ImageU8& mask) {
  const Components comps = connected_components(mask);
  if (comps.sizes.empty()) throw std::runtime_error("largest_component: empty mask");
  const int best =
      static_cast<int>(std::max_element(comps.sizes.begin(), comps.sizes.end()) -
                       comps.sizes.begin()) +
      1;
  ImageU8 out(mask.rows, mask.cols);
  for (size_t i = 0; i < comps.labels.size(); ++i)
    out.px[i] = comps.labels[i] == best ? 1 : 0;
  return out;
}

BBox tight_bbox(const ImageU8& mask) {
  int r0 = mask.rows, r1 = -1, c0 = mask.cols, c1 = -1;
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c)
      if (mask.at(r, c) != 0) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) throw std::runtime_error("tight_bbox: empty mask");
  return BBox{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

}  // namespace cgn
