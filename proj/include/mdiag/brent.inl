#pragma once

// Bounded Brent minimisation (golden section + parabolic interpolation), the
// same iteration as the classic fminbound routine except that the first probe
// is the caller's initial point rather than the golden-section point.

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdiag::diagnosis {

template <class F>
ScalarMin brent_minimize(F&& f, double lower, double upper, double initial, double xtol,
                         int max_iter) {
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  const double golden_mean = 0.5 * (3.0 - std::sqrt(5.0));
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 1.0); };

  double a = lower;
  double b = upper;
  double x = std::clamp(initial, lower, upper);
  double fulc = x, nfc = x, xf = x;
  double rat = 0.0, e = 0.0;
  double fx = f(x);
  int evaluations = 1;
  double ffulc = fx, fnfc = fx;
  double xm = 0.5 * (a + b);
  double tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
  double tol2 = 2.0 * tol1;

  while (std::abs(xf - xm) > (tol2 - 0.5 * (b - a))) {
    bool golden = true;
    if (std::abs(e) > tol1) {
      golden = false;
      double r = (xf - nfc) * (fx - ffulc);
      double q = (xf - fulc) * (fx - fnfc);
      double p = (xf - fulc) * q - (xf - nfc) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      r = e;
      e = rat;
      if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - xf) && p < q * (b - xf)) {
        rat = p / q;
        x = xf + rat;
        if ((x - a) < tol2 || (b - x) < tol2) rat = tol1 * sign(xm - xf);
      } else {
        golden = true;
      }
    }
    if (golden) {
      e = (xf >= xm) ? a - xf : b - xf;
      rat = golden_mean * e;
    }
    x = xf + sign(rat) * std::max(std::abs(rat), tol1);
    const double fu = f(x);
    ++evaluations;
    if (fu <= fx) {
      if (x >= xf) a = xf;
      else b = xf;
      fulc = nfc;
      ffulc = fnfc;
      nfc = xf;
      fnfc = fx;
      xf = x;
      fx = fu;
    } else {
      if (x < xf) a = x;
      else b = x;
      if (fu <= fnfc || nfc == xf) {
        fulc = nfc;
        ffulc = fnfc;
        nfc = x;
        fnfc = fu;
      } else if (fu <= ffulc || fulc == xf || fulc == nfc) {
        fulc = x;
        ffulc = fu;
      }
    }
    xm = 0.5 * (a + b);
    tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
    tol2 = 2.0 * tol1;
    if (evaluations >= max_iter) break;
  }
  return {xf, fx, evaluations};
}

}  // namespace mdiag::diagnosis
