#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gridstate/error.hpp"
#include "gridstate/forecaster.hpp"
#include "support.hpp"

namespace gridstate {
namespace {

// One-bus states carrying two scalar series (v and theta).
std::vector<StateVector> history_of(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<StateVector> h(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    h[t].v = Eigen::VectorXd::Constant(1, a[t]);
    h[t].theta = Eigen::VectorXd::Constant(1, b[t]);
  }
  return h;
}

std::vector<double> recurrence(const std::vector<double>& beta, double alpha,
                               std::vector<double> start, std::size_t length) {
  auto x = std::move(start);
  while (x.size() < length) {
    double next = alpha;
    for (std::size_t k = 0; k < beta.size(); ++k) next += beta[k] * x[x.size() - 1 - k];
    x.push_back(next);
  }
  return x;
}

Eigen::MatrixXd window_at(const std::vector<StateVector>& h, std::size_t end, std::size_t width) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(2 * h[0].size()), static_cast<Eigen::Index>(width));
  for (std::size_t k = 0; k < width; ++k) w.col(static_cast<Eigen::Index>(k)) = h[end - width + k].stacked();
  return w;
}

TEST(Forecaster, RecoversSecondOrderRecurrence) {
  const auto a = recurrence({0.5, 0.25}, 0.1, {1.0, -0.7}, 40);
  const auto b = recurrence({0.5, 0.25}, 0.1, {-2.0, 3.0}, 40);
  const auto model = fit_forecaster(history_of(a, b), 2);
  ASSERT_EQ(model.coefficients.cols(), 4);
  for (Eigen::Index r = 0; r < 2; ++r) {
    EXPECT_NEAR(model.coefficients(r, 0), 0.1, 1e-8);
    EXPECT_NEAR(model.coefficients(r, 1), 0.5, 1e-8);
    EXPECT_NEAR(model.coefficients(r, 2), 0.25, 1e-8);
    EXPECT_EQ(model.coefficients(r, 3), 0.0);
  }
  EXPECT_LT(model.fit_rmse.maxCoeff(), 1e-12);
}

// With the default 24 lags the fast mode of this recurrence decays below
// machine precision before the first regression row, so only the forecast,
// not the coefficients, is identifiable.
TEST(Forecaster, ContinuesDecayingRecurrenceWithDefaultLags) {
  const auto a = recurrence({0.5, 0.25}, 0.1, {1.0, -0.7}, 120);
  const auto h = history_of(a, a);
  const std::vector<StateVector> train(h.begin(), h.begin() + 80);
  const auto model = fit_forecaster(train, 24);
  for (std::size_t t = 80; t < 120; ++t) {
    const Eigen::VectorXd next = forecast_next(model, window_at(h, t, 25));
    EXPECT_NEAR(next(0), a[t], 1e-10);
  }
}

TEST(Forecaster, PeriodicSignalForecastIsExact) {
  std::vector<double> a, b;
  for (int t = 0; t < 24 * 12; ++t) {
    const double w = 2.0 * std::numbers::pi * t / 24.0;
    a.push_back(1.0 + 0.1 * std::sin(w) + 0.03 * std::cos(3 * w) + 0.01 * std::sin(7 * w + 0.3));
    b.push_back(-0.2 + 0.05 * std::cos(2 * w) + (t % 24 == 5 ? 0.01 : 0.0));
  }
  const auto h = history_of(a, b);
  const std::vector<StateVector> train(h.begin(), h.begin() + 24 * 5);
  const auto model = fit_forecaster(train);
  EXPECT_EQ(model.lags, 24);
  double worst = 0.0;
  for (std::size_t t = 24 * 5; t < h.size(); ++t) {
    const std::vector<StateVector> window(h.begin() + static_cast<std::ptrdiff_t>(t - 25),
                                          h.begin() + static_cast<std::ptrdiff_t>(t));
    const auto next = forecast_next(model, window);
    worst = std::max({worst, std::abs(next.v(0) - a[t]), std::abs(next.theta(0) - b[t])});
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Forecaster, ConstantHistoryForecastsTheConstant) {
  const std::vector<double> a(60, 1.0375), b(60, -0.125);
  const auto model = fit_forecaster(history_of(a, b));
  EXPECT_EQ(model.active_lags, std::vector<int>({0, 0}));
  EXPECT_TRUE(model.coefficients.rightCols(25).isZero(0.0));
  const auto h = history_of(a, b);
  const auto next = forecast_next(model, std::span(h).last(25));
  EXPECT_EQ(next.v(0), 1.0375);
  EXPECT_EQ(next.theta(0), -0.125);
}

// Coefficients of z^p - beta_0 z^(p-1) - ... - beta_(p-1) from the product of
// (z^2 - 2 cos(w) z + 1) over the frequencies.
std::vector<double> unit_circle_recurrence(const std::vector<double>& omegas) {
  std::vector<double> poly{1.0};
  for (double w : omegas) {
    std::vector<double> next(poly.size() + 2, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + 1] += -2.0 * std::cos(w) * poly[i];
      next[i + 2] += poly[i];
    }
    poly = next;
  }
  std::vector<double> beta;
  for (std::size_t k = 1; k < poly.size(); ++k) beta.push_back(-poly[k]);
  return beta;
}

TEST(Forecaster, RecoversRandomRecurrencesUpToOrderTwentyFour) {
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const int pairs = 1 + static_cast<int>(rng.below(12));
    std::vector<double> omegas;
    while (static_cast<int>(omegas.size()) < pairs) {
      const double w = rng.uniform(0.15, 3.0);
      bool separated = true;
      for (double o : omegas) separated = separated && std::abs(o - w) > 0.15;
      if (separated) omegas.push_back(w);
    }
    const auto beta = unit_circle_recurrence(omegas);
    const double level = rng.uniform(-1.0, 1.0);
    double beta_sum = 0.0;
    for (double x : beta) beta_sum += x;
    const double alpha = level * (1.0 - beta_sum);

    std::vector<std::vector<double>> series;
    for (int s = 0; s < 2; ++s) {
      std::vector<double> x;
      std::vector<double> amp, phase;
      for (int k = 0; k < pairs; ++k) {
        amp.push_back(rng.uniform(0.5, 1.5));
        phase.push_back(rng.uniform(0.0, 6.28));
      }
      for (int t = 0; t < 400; ++t) {
        double v = level;
        for (int k = 0; k < pairs; ++k) v += amp[static_cast<std::size_t>(k)] * std::cos(omegas[static_cast<std::size_t>(k)] * t + phase[static_cast<std::size_t>(k)]);
        x.push_back(v);
      }
      series.push_back(x);
    }
    const auto model = fit_forecaster(history_of(series[0], series[1]));
    for (Eigen::Index r = 0; r < 2; ++r) {
      EXPECT_NEAR(model.coefficients(r, 0), alpha, 1e-8) << "order " << beta.size();
      for (std::size_t k = 0; k < 25; ++k) {
        const double expected = k < beta.size() ? beta[k] : 0.0;
        EXPECT_NEAR(model.coefficients(r, static_cast<Eigen::Index>(k + 1)), expected, 1e-8)
            << "order " << beta.size() << " lag " << k;
      }
    }
  }
}

// A period-25 sequence sums to a constant over any 25 consecutive samples,
// so with the intercept taken first the oldest lag is redundant and the fit
// is x_{t+1} = S - (x_t + ... + x_{t-23}).
TEST(Forecaster, PeriodTwentyFiveUsesInterceptAndUnitNegativeLags) {
  Rng rng(102);
  std::vector<double> cycle(25);
  double sum = 0.0;
  for (auto& c : cycle) sum += (c = rng.uniform(0.5, 1.5));
  std::vector<double> a;
  for (int t = 0; t < 200; ++t) a.push_back(cycle[static_cast<std::size_t>(t % 25)]);
  const auto model = fit_forecaster(history_of(a, a));
  EXPECT_NEAR(model.coefficients(0, 0), sum, 1e-8);
  for (Eigen::Index k = 1; k <= 24; ++k) EXPECT_NEAR(model.coefficients(0, k), -1.0, 1e-8);
  EXPECT_EQ(model.coefficients(0, 25), 0.0);
  EXPECT_EQ(model.active_lags[0], 24);
}

TEST(Forecaster, AffineMapOfHistoryMapsForecast) {
  Rng rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x{1.0};
    for (int t = 1; t < 150; ++t) x.push_back(0.9 * x.back() + 0.1 + 0.05 * rng.normal());
    const double scale = rng.uniform(0.5, 3.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double shift = rng.uniform(-2.0, 2.0);
    std::vector<double> y;
    for (double v : x) y.push_back(scale * v + shift);
    const auto h = history_of(x, y);
    const auto model = fit_forecaster(std::span(h).first(120), 6);
    for (std::size_t t = 120; t < 150; ++t) {
      const Eigen::VectorXd next = forecast_next(model, window_at(h, t, 7));
      EXPECT_NEAR(next(1), scale * next(0) + shift, 1e-9 * std::max(1.0, std::abs(next(1))));
    }
  }
}

TEST(Forecaster, ErrorsOnShortHistoryAndWrongWindow) {
  const std::vector<double> a(25, 1.0);
  EXPECT_THROW(fit_forecaster(history_of(a, a)), Error);
  const std::vector<double> b(26, 1.0);
  const auto model = fit_forecaster(history_of(b, b));
  const auto h = history_of(b, b);
  EXPECT_THROW(forecast_next(model, std::span(h).first(24)), ShapeError);
  EXPECT_THROW(forecast_next(model, Eigen::MatrixXd::Zero(4, 25)), ShapeError);
}

TEST(Forecaster, JsonRoundTrip) {
  Rng rng(104);
  std::vector<double> a, b;
  for (int t = 0; t < 100; ++t) {
    a.push_back(1.0 + 0.01 * rng.normal());
    b.push_back(0.1 * rng.normal());
  }
  const auto model = fit_forecaster(history_of(a, b), 5);
  const auto back = ForecastModel::from_json(model.to_json("m"));
  EXPECT_EQ(back.lags, 5);
  EXPECT_EQ(back.coefficients, model.coefficients);
  EXPECT_EQ(back.fit_rmse, model.fit_rmse);
  EXPECT_EQ(back.active_lags, model.active_lags);
  EXPECT_THROW(ForecastModel::from_json("{\"format\": \"x\"}"), Error);
}

struct PseudoFixture {
  NetworkCase network = test::fixture("ieee14");
  AdmittanceMatrix ybus = build_ybus(network);
  MeasurementPlan plan = default_plan(network, PlanPreset::Full14);
  StateVector forecast = [this] {
    Rng rng(105);
    return test::random_state(rng, network);
  }();
  MeasurementVector real = [this] {
    Rng rng(106);
    return MeasurementVector::complete(evaluate_h(test::random_state(rng, network), plan, ybus));
  }();
};

TEST(PseudoMeasurements, NothingMissingLeavesVectorUnchanged) {
  const PseudoFixture f;
  const auto out = pseudo_measurements(f.forecast, f.real, f.plan, f.ybus);
  EXPECT_EQ(out.values, f.real.values);
  EXPECT_EQ(out.mask, f.real.mask);
}

TEST(PseudoMeasurements, EverythingMissingGivesForecastMeasurements) {
  PseudoFixture f;
  std::fill(f.real.mask.begin(), f.real.mask.end(), false);
  const auto out = pseudo_measurements(f.forecast, f.real, f.plan, f.ybus);
  EXPECT_EQ(out.values, evaluate_h(f.forecast, f.plan, f.ybus));
  EXPECT_TRUE(out.fully_available());
}

TEST(PseudoMeasurements, AvailableChannelsAreNeverOverwritten) {
  PseudoFixture f;
  Rng rng(107);
  const Eigen::VectorXd h = evaluate_h(f.forecast, f.plan, f.ybus);
  for (int trial = 0; trial < 50; ++trial) {
    auto real = f.real;
    for (std::size_t k = 0; k < real.size(); ++k) real.mask[k] = rng.uniform() > 0.3;
    const auto out = pseudo_measurements(f.forecast, real, f.plan, f.ybus);
    EXPECT_TRUE(out.fully_available());
    for (std::size_t k = 0; k < real.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      EXPECT_EQ(out.values(i), real.mask[k] ? real.values(i) : h(i));
    }
  }
}

}  // namespace
}  // namespace gridstate
