#include "contextgen/compositor.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

#include "contextgen/rng.hpp"

namespace contextgen {

namespace {

std::vector<Bitmap> effective_areas(const Scene& scene) {
  std::vector<Bitmap> areas;
  areas.reserve(scene.instances().size());
  for (const Instance& inst : scene.instances()) areas.push_back(effective_area(scene, inst));
  return areas;
}

long long intersection_count(const Bitmap& a, const Bitmap& b) {
  long long n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (a.at(x, y) && b.at(x, y)) ++n;
  return n;
}

}  // namespace

Eigen::MatrixXd effective_iou_matrix(const Scene& scene) {
  const auto areas = effective_areas(scene);
  const int n = scene.instance_count();
  Eigen::MatrixXd iou = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    const long long ca = areas[static_cast<std::size_t>(a)].count();
    for (int b = a; b < n; ++b) {
      const long long cb = areas[static_cast<std::size_t>(b)].count();
      const long long inter =
          intersection_count(areas[static_cast<std::size_t>(a)], areas[static_cast<std::size_t>(b)]);
      const long long uni = ca + cb - inter;
      const double v = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
      iou(a, b) = v;
      iou(b, a) = v;
    }
  }
  return iou;
}

std::vector<double> priority_scores(const Scene& scene, const Eigen::MatrixXd& iou,
                                    const LayerParams& params) {
  if (params.alpha < 0 || params.beta < 0 || params.lambda < 0)
    throw std::invalid_argument("layer params must be non-negative");
  const int n = scene.instance_count();
  if (iou.rows() != n || iou.cols() != n)
    throw std::invalid_argument("IoU matrix does not match the instance count");

  const auto areas = effective_areas(scene);
  Rng rng = Rng(params.seed).stream("layer-random-factor");

  std::vector<double> scores(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double area = static_cast<double>(areas[static_cast<std::size_t>(i)].count()) /
                        static_cast<double>(scene.canvas_area());
    double overlap = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) overlap += iou(i, j);
    const double random_factor = rng.uniform();  // drawn in id order, always
    scores[static_cast<std::size_t>(i)] =
        params.alpha * area + params.beta * (1.0 - overlap) + params.lambda * random_factor;
  }
  return scores;
}

std::vector<LayerConstraint> containment_constraints(const Scene& scene) {
  const auto areas = effective_areas(scene);
  const int n = scene.instance_count();

  std::vector<LayerConstraint> constraints;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Bitmap& ai = areas[static_cast<std::size_t>(i)];
      const Bitmap& aj = areas[static_cast<std::size_t>(j)];
      const long long inter = intersection_count(ai, aj);
      const bool subset = inter == ai.count();
      const bool strict = subset && ai.count() != aj.count();
      // strict subset: contained instances draw above their containers
      if (strict) constraints.push_back({i + 1, j + 1});
    }
  return constraints;
}

LayerOrder layering_order(const Scene& scene, const LayerParams& params) {
  const int n = scene.instance_count();

  LayerOrder order;
  order.scores = priority_scores(scene, effective_iou_matrix(scene), params);
  order.constraints = containment_constraints(scene);

  // Rank by score descending, ties by ascending id.
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rank[static_cast<std::size_t>(i)] = i + 1;
  std::sort(rank.begin(), rank.end(), [&](int a, int b) {
    const double sa = order.scores[static_cast<std::size_t>(a) - 1];
    const double sb = order.scores[static_cast<std::size_t>(b) - 1];
    return sa != sb ? sa > sb : a < b;
  });

  // Topological pass following the ranking: always place the best-ranked
  // instance whose required-below set is already placed. Strict-subset
  // constraints cannot cycle.
  std::vector<std::vector<int>> must_follow(static_cast<std::size_t>(n) + 1);
  for (const LayerConstraint& c : order.constraints)
    must_follow[static_cast<std::size_t>(c.above)].push_back(c.below);

  std::vector<bool> placed(static_cast<std::size_t>(n) + 1, false);
  order.bottom_to_top.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(order.bottom_to_top.size()) < n) {
    bool progressed = false;
    for (int id : rank) {
      if (placed[static_cast<std::size_t>(id)]) continue;
      const auto& deps = must_follow[static_cast<std::size_t>(id)];
      const bool ready = std::all_of(deps.begin(), deps.end(), [&](int below) {
        return placed[static_cast<std::size_t>(below)];
      });
      if (ready) {
        order.bottom_to_top.push_back(id);
        placed[static_cast<std::size_t>(id)] = true;
        progressed = true;
        break;
      }
    }
    assert(progressed && "containment constraints formed a cycle");
    if (!progressed) throw std::logic_error("containment constraints formed a cycle");
  }
  return order;
}

CompositeResult composite(const Scene& scene, const LayerOrder& order) {
  if (order.bottom_to_top.size() != static_cast<std::size_t>(scene.instance_count()))
    throw std::invalid_argument("layer order does not cover every instance");

  const auto areas = effective_areas(scene);
  CompositeResult res;
  res.ownership.width = scene.canvas_w();
  res.ownership.height = scene.canvas_h();
  res.ownership.cells.assign(static_cast<std::size_t>(scene.canvas_area()), 0);

  for (int id : order.bottom_to_top) {
    const Bitmap& area = areas[static_cast<std::size_t>(id) - 1];
    for (int y = 0; y < area.height(); ++y)
      for (int x = 0; x < area.width(); ++x)
        if (area.at(x, y))
          res.ownership.cells[static_cast<std::size_t>(y) * scene.canvas_w() + x] = id;
  }

  res.occlusion.assign(static_cast<std::size_t>(scene.instance_count()), 0.0);
  std::vector<long long> visible(static_cast<std::size_t>(scene.instance_count()) + 1, 0);
  for (int owner : res.ownership.cells)
    if (owner > 0) ++visible[static_cast<std::size_t>(owner)];
  for (const Instance& inst : scene.instances()) {
    const long long effective = areas[static_cast<std::size_t>(inst.id) - 1].count();
    if (effective > 0)
      res.occlusion[static_cast<std::size_t>(inst.id) - 1] =
          1.0 - static_cast<double>(visible[static_cast<std::size_t>(inst.id)]) /
                    static_cast<double>(effective);
  }
  return res;
}

}  // namespace contextgen
