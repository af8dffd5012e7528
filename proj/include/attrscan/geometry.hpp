#pragma once

#include <span>
#include <vector>

namespace attrscan {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

using Polygon = std::vector<Point2>;  // counterclockwise

inline double cross(const Point2& o, const Point2& a, const Point2& b) noexcept {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(std::span<const Point2> polygon) noexcept;

// Quickhull. Returns the strictly convex vertices in counterclockwise order,
// starting at the lowest-x (then lowest-y) point. Collinear and duplicate points
// are dropped, so fewer than three vertices means the input has no area.
Polygon convex_hull(std::span<const Point2> points);

}  // namespace attrscan
