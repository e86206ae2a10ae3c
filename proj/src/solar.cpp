#include "trapkit/solar.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trapkit {

namespace chr = std::chrono;

namespace {

constexpr double kZenithDeg = 90.833;

double rad(double deg) { return deg * std::numbers::pi / 180.0; }
double deg(double r) { return r * 180.0 / std::numbers::pi; }

double julian_day(chr::year_month_day ymd) {
  int y = static_cast<int>(ymd.year());
  int m = static_cast<int>(static_cast<unsigned>(ymd.month()));
  const int d = static_cast<int>(static_cast<unsigned>(ymd.day()));
  if (m <= 2) {
    y -= 1;
    m += 12;
  }
  const int a = y / 100;
  const int b = 2 - a + a / 4;
  return std::floor(365.25 * (y + 4716)) + std::floor(30.6001 * (m + 1)) + d + b - 1524.5;
}

double julian_century(double jd) { return (jd - 2451545.0) / 36525.0; }

struct SunState {
  double declination_deg;
  double equation_of_time_min;
};

SunState sun_state(double t) {
  const double l0 = std::fmod(280.46646 + t * (36000.76983 + 0.0003032 * t), 360.0);
  const double m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
  const double e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t);
  const double mr = rad(m);
  const double center = std::sin(mr) * (1.914602 - t * (0.004817 + 0.000014 * t)) +
                        std::sin(2 * mr) * (0.019993 - 0.000101 * t) + std::sin(3 * mr) * 0.000289;
  const double omega = 125.04 - 1934.136 * t;
  const double apparent_long = l0 + center - 0.00569 - 0.00478 * std::sin(rad(omega));
  const double seconds = 21.448 - t * (46.8150 + t * (0.00059 - t * 0.001813));
  const double mean_obliq = 23.0 + (26.0 + seconds / 60.0) / 60.0;
  const double obliq = mean_obliq + 0.00256 * std::cos(rad(omega));

  const double decl = deg(std::asin(std::sin(rad(obliq)) * std::sin(rad(apparent_long))));

  const double y = std::pow(std::tan(rad(obliq) / 2.0), 2);
  const double l0r = rad(l0);
  const double eq = y * std::sin(2 * l0r) - 2 * e * std::sin(mr) + 4 * e * y * std::sin(mr) * std::cos(2 * l0r) -
                    0.5 * y * y * std::sin(4 * l0r) - 1.25 * e * e * std::sin(2 * mr);
  return {decl, 4.0 * deg(eq)};
}

// cos of the hour angle at which the sun crosses the refracted horizon.
double cos_hour_angle(double lat_deg, double decl_deg) {
  const double lat = rad(lat_deg);
  const double dec = rad(decl_deg);
  return std::cos(rad(kZenithDeg)) / (std::cos(lat) * std::cos(dec)) - std::tan(lat) * std::tan(dec);
}

// Minutes after 00:00 UTC of the given Julian day. Refined by re-evaluating the sun's
// position at the previous estimate.
std::optional<double> event_minutes(bool rising, double jd, const GeoLocation& loc, PolarState& polar) {
  const double noon_guess = 720.0 - 4.0 * loc.longitude;
  double minutes = noon_guess;
  for (int iter = 0; iter < 5; ++iter) {
    const SunState s = sun_state(julian_century(jd + minutes / 1440.0));
    const double c = cos_hour_angle(loc.latitude, s.declination_deg);
    if (c > 1.0) {
      polar = PolarState::PolarNight;
      return std::nullopt;
    }
    if (c < -1.0) {
      polar = PolarState::PolarDay;
      return std::nullopt;
    }
    const double ha = deg(std::acos(c));
    minutes = 720.0 - 4.0 * (loc.longitude + (rising ? ha : -ha)) - s.equation_of_time_min;
  }
  return minutes;
}

Timestamp at_minutes(chr::year_month_day date, double minutes) {
  const auto ms = static_cast<long long>(std::llround(minutes * 60000.0));
  return chr::sys_days{date} + chr::milliseconds{ms};
}

}  // namespace

GeoLocation::GeoLocation(double lat, double lon) : latitude(lat), longitude(lon) {
  if (!(lat >= -90.0 && lat <= 90.0)) throw std::invalid_argument("latitude out of range");
  if (!(lon >= -180.0 && lon <= 180.0)) throw std::invalid_argument("longitude out of range");
}

const char* to_string(TrapMode m) { return m == TrapMode::Daytime ? "Daytime" : "Nighttime"; }

const char* to_string(PolarState p) {
  switch (p) {
    case PolarState::None: return "none";
    case PolarState::PolarDay: return "polar_day";
    case PolarState::PolarNight: return "polar_night";
  }
  return "none";
}

SolarEvents solar_events(const GeoLocation& loc, chr::year_month_day date) {
  const double jd = julian_day(date);
  SolarEvents ev;
  PolarState polar = PolarState::None;
  const auto rise = event_minutes(true, jd, loc, polar);
  if (!rise) {
    ev.polar = polar;
    return ev;
  }
  const auto set = event_minutes(false, jd, loc, polar);
  if (!set) {
    ev.polar = polar;
    return ev;
  }
  ev.sunrise = at_minutes(date, *rise);
  ev.sunset = at_minutes(date, *set);
  return ev;
}

chr::year_month_day solar_date(const GeoLocation& loc, Timestamp t) {
  const auto shift = chr::milliseconds{static_cast<long long>(std::llround(loc.longitude / 15.0 * 3600000.0))};
  return chr::year_month_day{chr::floor<chr::days>(t + shift)};
}

TrapMode mode_at(const GeoLocation& loc, Timestamp t) {
  const SolarEvents ev = solar_events(loc, solar_date(loc, t));
  switch (ev.polar) {
    case PolarState::PolarDay: return TrapMode::Daytime;
    case PolarState::PolarNight: return TrapMode::Nighttime;
    case PolarState::None: break;
  }
  return (*ev.sunrise <= t && t < *ev.sunset) ? TrapMode::Daytime : TrapMode::Nighttime;
}

}  // namespace trapkit
