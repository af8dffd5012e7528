#include "attrscan/geometry.hpp"

#include <algorithm>

namespace attrscan {

namespace {

// Appends the hull chain strictly to the left of a->b (exclusive of both ends).
void hull_side(const std::vector<Point2>& pts, const Point2& a, const Point2& b, Polygon& out) {
    const Point2* far = nullptr;
    double best = 0.0;
    std::vector<Point2> left;
    for (const auto& p : pts) {
        const double c = cross(a, b, p);
        if (c > 0.0) {
            left.push_back(p);
            if (c > best) {
                best = c;
                far = &p;
            }
        }
    }
    if (far == nullptr) return;
    const Point2 pivot = *far;
    hull_side(left, a, pivot, out);
    out.push_back(pivot);
    hull_side(left, pivot, b, out);
}

}  // namespace

double polygon_area(std::span<const Point2> polygon) noexcept {
    double twice = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto& p = polygon[i];
        const auto& q = polygon[(i + 1) % polygon.size()];
        twice += p.x * q.y - q.x * p.y;
    }
    return 0.5 * twice;
}

Polygon convex_hull(std::span<const Point2> points) {
    std::vector<Point2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(),
              [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 2) return pts;

    const Point2 lo = pts.front(), hi = pts.back();
    std::vector<Point2> below, above;
    hull_side(pts, hi, lo, below);  // ordered hi..lo
    hull_side(pts, lo, hi, above);  // ordered lo..hi

    Polygon out;
    out.push_back(lo);
    out.insert(out.end(), below.rbegin(), below.rend());
    out.push_back(hi);
    out.insert(out.end(), above.rbegin(), above.rend());
    return out;
}

}  // namespace attrscan
