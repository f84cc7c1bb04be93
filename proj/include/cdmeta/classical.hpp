#pragma once

#include "cdmeta/model.hpp"

namespace cdmeta {

/// Classical random-effects Wald interval around the IVW mean with
/// se = (sum w)^(-1/2) and a two-sided normal p-value at 0.
EstimationResult ivw_result(const MetaAnalysis& ma, double tau2, double level);

/// Hartung-Knapp-Sidik-Jonkman interval: IVW mean, variance
/// sum w (y - mu)^2 / ((k - 1) sum w), t_{k-1} quantiles and p-value.
/// A zero-residual data set gives a zero-width interval.
EstimationResult hksj_result(const MetaAnalysis& ma, double tau2, double level);

}  // namespace cdmeta
