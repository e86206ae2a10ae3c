#pragma once

#include <chrono>
#include <optional>

#include "trapkit/timeutil.hpp"

namespace trapkit {

struct GeoLocation {
  double latitude = 0.0;   // degrees, north positive
  double longitude = 0.0;  // degrees, east positive

  GeoLocation() = default;
  GeoLocation(double lat, double lon);
};

enum class PolarState { None, PolarDay, PolarNight };

struct SolarEvents {
  std::optional<Timestamp> sunrise;
  std::optional<Timestamp> sunset;
  PolarState polar = PolarState::None;
};

enum class TrapMode { Daytime, Nighttime };

const char* to_string(TrapMode m);
const char* to_string(PolarState p);

/// Geometric sunrise/sunset (zenith 90.833 deg) using the NOAA solar position equations.
/// Event times are absolute UTC instants and may fall outside the UTC calendar day when
/// the longitude is far from Greenwich.
SolarEvents solar_events(const GeoLocation& loc, std::chrono::year_month_day date);

/// Local mean solar date (UTC shifted by longitude / 15 hours) used to pick the day whose
/// events bracket `t`.
std::chrono::year_month_day solar_date(const GeoLocation& loc, Timestamp t);

/// Daytime on [sunrise, sunset).
TrapMode mode_at(const GeoLocation& loc, Timestamp t);

}  // namespace trapkit
