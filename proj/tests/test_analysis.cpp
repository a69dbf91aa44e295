#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "graphflow/analysis.hpp"
#include "graphflow/elliptic.hpp"
#include "graphflow/scenarios.hpp"
#include "support.hpp"

using namespace graphflow;
using testsupport::unit_box;

namespace {

GraphField affine_on(const GridPtr& g) {
  return sample_field(g, 2, [](std::span<const double> x, std::span<double> out) {
    out[0] = 0.4 * x[0] - 0.2 * x[1] + 1.0;
    out[1] = 0.1 * x[0] + 0.3 * x[1] - 2.0;
  });
}

GraphField lo_full_box(int res) { return make_scenario("lo_cone", {.resolution = res, .inner_radius = 0.0}).sample(); }

}  // namespace

TEST(Rescale, AffineKeepsGradient) {
  const GridPtr g = make_grid(unit_box(2, 17, -1.0, 1.0));
  const GraphField u = affine_on(g);
  const std::vector<double> x0{0.25, -0.5};
  const GridPtr target = make_grid(unit_box(2, 9, -0.5, 0.5));
  for (double lambda : {0.25, 0.5, 1.0}) {
    const GraphField v = rescale(u, lambda, x0, target);
    for (NodeId p = 0; p < target->size(); ++p) {
      const double x = target->coord(p, 0), y = target->coord(p, 1);
      EXPECT_NEAR(v(p, 0), 0.4 * x - 0.2 * y, 1e-13);
      EXPECT_NEAR(v(p, 1), 0.1 * x + 0.3 * y, 1e-13);
    }
  }
}

TEST(Rescale, QuadraticHalvesUnderBlowUp) {
  // Target nodes map onto source nodes, so interpolation is exact.
  const GridPtr src = make_grid(unit_box(1, 41, -1.0, 1.0));
  const GraphField u = sample_field(src, 1, [](std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0]; });
  const GridPtr target = make_grid(unit_box(1, 11, -1.0, 1.0));
  const std::vector<double> x0{0.0};
  const GraphField v = rescale(u, 0.5, x0, target);
  for (NodeId p = 0; p < target->size(); ++p) {
    const double x = target->coord(p, 0);
    EXPECT_NEAR(v(p, 0), 0.5 * x * x, 1e-14);
  }
}

TEST(Rescale, RoundTripRecoversField) {
  const GraphField u = testsupport::random_field(9, 2, 1, 65, 0.3);
  const std::vector<double> x0{0.5, 0.5}, origin{0.0, 0.0};
  const GraphField v = rescale(u, 0.5, x0, make_grid(unit_box(2, 33, -1.0, 1.0)));
  const GridPtr back = make_grid(unit_box(2, 17, -0.4, 0.4));
  const GraphField w = rescale(v, 2.0, origin, back);
  const auto c = interpolate(u, x0);
  double worst = 0.0;
  for (NodeId p = 0; p < back->size(); ++p) {
    const double y[2] = {x0[0] + back->coord(p, 0), x0[1] + back->coord(p, 1)};
    const auto exact = interpolate(u, y);
    worst = std::max(worst, std::abs(w(p, 0) - ((*exact)[0] - (*c)[0])));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Rescale, Errors) {
  const GridPtr g = make_grid(unit_box(2, 9));
  const GraphField u = affine_on(g);
  const std::vector<double> x0{0.5, 0.5};
  EXPECT_THROW(rescale(u, 0.0, x0, g), AnalysisError);
  EXPECT_THROW(rescale(u, 2.0, x0, g), AnalysisError);
  const std::vector<double> outside{2.0, 0.5};
  EXPECT_THROW(rescale(u, 1.0, outside, make_grid(unit_box(2, 3, -0.1, 0.1))), AnalysisError);
}

TEST(Rescale, ConeIsScaleInvariant) {
  const std::vector<double> origin(4, 0.0);
  const GridPtr target = make_grid(unit_box(4, 5, -0.25, 0.25));
  const double coarse = std::max(homogeneity_defect(lo_full_box(9), 0.5, origin, target),
                                 homogeneity_defect(lo_full_box(9), 2.0, origin, target));
  const double fine = std::max(homogeneity_defect(lo_full_box(17), 0.5, origin, target),
                               homogeneity_defect(lo_full_box(17), 2.0, origin, target));
  // The kink at the origin limits multilinear interpolation to O(h).
  EXPECT_LT(fine, 0.6 * coarse);
  // A non-homogeneous field is detected.
  const GraphField quad = sample_field(make_grid(unit_box(4, 9, -1.0, 1.0)), 1,
                                       [](std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0]; });
  EXPECT_GT(homogeneity_defect(quad, 2.0, origin, target), 0.05);
}

TEST(Density, PlanesHaveUnitDensity) {
  const GridPtr g = make_grid(unit_box(2, 33, -1.0, 1.0));
  const std::vector<double> radii{0.2, 0.3, 0.4, 0.5};
  const GraphField zero(g, 1);
  const DensityProfile flat = density_ratio(zero, std::vector<double>{0.0, 0.0, 0.0}, radii);
  EXPECT_NEAR(flat.omega_n, std::numbers::pi, 1e-15);
  const GraphField aff = affine_on(g);
  // Centre (0.1, 0, u(0.1, 0)).
  const std::vector<double> p{0.1, 0.0, 0.4 * 0.1 + 1.0, 0.1 * 0.1 - 2.0};
  const DensityProfile tilted = density_ratio(aff, p, radii);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    EXPECT_LE(std::abs(flat.ratios[k] - 1.0), flat.errors[k]) << radii[k];
    EXPECT_LE(std::abs(tilted.ratios[k] - 1.0), tilted.errors[k]) << radii[k];
    EXPECT_GT(flat.errors[k], 0.0);
  }
}

TEST(Density, ConeRatioIsScaleInvariant) {
  const GraphField u = lo_full_box(17);
  const std::vector<double> p(7, 0.0);
  const std::vector<double> radii{0.5, 0.75, 1.0};
  const DensityProfile d = density_ratio(u, p, radii);
  // In base coordinates the cone is the graph of a 1-homogeneous map whose
  // metric determinant at the origin direction gives density 16/9.
  for (std::size_t k = 0; k < radii.size(); ++k) {
    EXPECT_GE(d.ratios[k], 1.0 - d.errors[k]);
    EXPECT_LE(std::abs(d.ratios[k] - 16.0 / 9.0), d.errors[k]) << radii[k];
    if (k > 0) {
      EXPECT_LE(std::abs(d.ratios[k] - d.ratios[k - 1]), d.errors[k] + d.errors[k - 1]);
    }
  }
}

TEST(Density, ScherkIsMonotoneUpToError) {
  const GraphField u = make_scenario("scherk", {.resolution = 65}).sample();
  const std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> radii{0.1, 0.2, 0.3, 0.4, 0.5};
  const DensityProfile d = density_ratio(u, p, radii);
  for (std::size_t k = 1; k < radii.size(); ++k) EXPECT_GE(d.ratios[k], d.ratios[k - 1] - d.errors[k] - d.errors[k - 1]);
}

TEST(Density, ErrorsAndCsv) {
  const GridPtr g = make_grid(unit_box(2, 17, -1.0, 1.0));
  const GraphField zero(g, 1);
  const std::vector<double> c{0.0, 0.0, 0.0};
  EXPECT_THROW(density_ratio(zero, c, std::vector<double>{1.5}), AnalysisError);
  EXPECT_THROW(density_ratio(zero, c, std::vector<double>{0.3, 0.2}), AnalysisError);
  EXPECT_THROW(density_ratio(zero, std::vector<double>{0.0, 0.0}, std::vector<double>{0.3}), AnalysisError);
  std::ostringstream os;
  write_density_csv(os, density_ratio(zero, c, std::vector<double>{0.25, 0.5}));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "r,sigma,err");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 5), "0.25,");
  EXPECT_THROW(unit_ball_volume(5), std::out_of_range);
  EXPECT_NEAR(unit_ball_volume(4), std::numbers::pi * std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(unit_ball_volume(3), 4.0 * std::numbers::pi / 3.0, 1e-15);
}

TEST(Refinement, AffineRowsAreExact) {
  for (const char* kind : {"nondiv_inf", "nondiv_l2", "div_inf", "div_l2"}) {
    const auto rows = refinement_study(make_scenario("affine"), {9, 17, 33}, parse_residual_kind(kind));
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
      EXPECT_TRUE(r.exact) << kind;
      EXPECT_LT(r.norm, kExactResidual);
      EXPECT_FALSE(r.order.has_value());
    }
  }
  EXPECT_THROW(refinement_study(make_scenario("affine"), {9}), AnalysisError);
  EXPECT_THROW(parse_residual_kind("l3"), std::invalid_argument);
}

TEST(Refinement, NestedLevelsAndSpacing) {
  const auto rows = refinement_study(make_scenario("scherk"), {17, 33, 65});
  EXPECT_FALSE(rows[0].nested_norm.has_value());
  ASSERT_TRUE(rows[1].nested_norm.has_value());
  EXPECT_LE(*rows[1].nested_norm, rows[1].norm);
  EXPECT_NEAR(rows[0].h / rows[1].h, 2.0, 1e-12);
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_GE(*rows[k].order, 1.8);
  // Non-nested levels fall back to per-level norms.
  const auto loose = refinement_study(make_scenario("scherk"), {20, 40});
  EXPECT_FALSE(loose[1].nested_norm.has_value());
  EXPECT_GT(*loose[1].order, 1.5);
}

TEST(Subharmonicity, FlatFieldsSatisfyEverywhere) {
  const GraphField zero(make_grid(unit_box(2, 17)), 2);
  const SubharmonicityReport r = subharmonicity(zero);
  EXPECT_EQ(r.checked, r.satisfied);
  EXPECT_GT(r.checked, 0u);
  EXPECT_NEAR(r.delta, 1.0, 1e-12);
}

TEST(Subharmonicity, CodimOneMinimalGraph) {
  const SubharmonicityReport r = subharmonicity(make_scenario("scherk", {.resolution = 65}).sample());
  EXPECT_GE(r.fraction(), 0.99);
}

TEST(Subharmonicity, ConvergedAreaDecreasingSolution) {
  const GraphField psi = make_scenario("random_area_decreasing", {.resolution = 65, .seed = 1}).sample();
  const PicardReport solved = picard_solve(psi, {.outer_tol = 1e-10});
  ASSERT_TRUE(solved.converged);
  const SubharmonicityReport r = subharmonicity(solved.final);
  EXPECT_GT(r.delta, 0.0);
  EXPECT_GE(r.fraction(), 0.99);
}
