#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "hyperfeed/core.hpp"
#include "hyperfeed/json_io.hpp"

using namespace hyperfeed;
using nlohmann::json;

namespace {

// Reference values from tests/oracles/geo_oracle.py (spherical law of cosines, 50 digits).
constexpr double kEquatorOneDegreeKm = 111.194926644559;
constexpr double kTrondheimOsloKm = 391.480156861656;

GeoPoint random_point(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> lat(-90.0, 90.0), lon(-180.0, 180.0);
  return {lat(gen), lon(gen)};
}

json valid_news_body() {
  return {{"id", "n1"},
          {"description", "Road closed"},
          {"category", "Traffic"},
          {"channel", "city"},
          {"hashtags", {"#Road", "road", "Jam"}},
          {"location", {{"lat", 63.43}, {"lon", 10.39}}},
          {"created_at", "2024-06-01T12:00:00Z"},
          {"author_id", "u1"}};
}

}  // namespace

TEST(Haversine, IdenticalPointsAreZero) { EXPECT_EQ(haversine_km({63.43, 10.39}, {63.43, 10.39}), 0.0); }

TEST(Haversine, OneDegreeOnTheEquator) {
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), 111.195, 0.001);
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), kEquatorOneDegreeKm, 1e-9);
}

TEST(Haversine, TrondheimToOslo) {
  const double d = haversine_km({63.4305, 10.3951}, {59.9139, 10.7522});
  EXPECT_NEAR(d, 392.0, 1.0);
  EXPECT_NEAR(d, kTrondheimOsloKm, 1e-6);
}

TEST(Haversine, AcrossTheAntimeridian) {
  EXPECT_NEAR(haversine_km({10, 179.99}, {10, -179.99}), 2.19011251676643, 1e-9);
}

TEST(HaversineProperty, SymmetricAndNonNegative) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_point(gen), b = random_point(gen);
    const double ab = haversine_km(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(ab, haversine_km(b, a));
    EXPECT_LE(haversine_km(a, a), 1e-9);
  }
}

TEST(HaversineProperty, TriangleInequality) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_point(gen), b = random_point(gen), c = random_point(gen);
    EXPECT_LE(haversine_km(a, c), haversine_km(a, b) + haversine_km(b, c) + 1e-6);
  }
}

TEST(Timestamp, RoundTripsRfc3339) {
  const auto t = Timestamp::parse("2024-06-01T12:34:56.789Z");
  EXPECT_EQ(t.to_rfc3339(), "2024-06-01T12:34:56.789Z");
  EXPECT_EQ(Timestamp::parse(t.to_rfc3339()), t);
}

TEST(Timestamp, AcceptsOffsetsAndMissingFraction) {
  EXPECT_EQ(Timestamp::parse("2024-06-01T14:00:00+02:00"), Timestamp::parse("2024-06-01T12:00:00Z"));
  EXPECT_EQ(Timestamp::parse("2024-06-01T12:00:00Z").to_rfc3339(), "2024-06-01T12:00:00.000Z");
  EXPECT_EQ(Timestamp::parse("1970-01-01T00:00:00.001Z").millis(), 1);
}

TEST(Timestamp, RejectsMalformedText) {
  for (const char* bad : {"", "2024-06-01", "2024-13-01T00:00:00Z", "2024-06-01T25:00:00Z", "2024-06-01T12:00:00",
                          "2024-02-30T00:00:00Z", "2024-06-01T12:00:00Zjunk"}) {
    EXPECT_THROW(Timestamp::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(Timestamp, OrderingAndHours) {
  const auto a = Timestamp::parse("2024-06-01T00:00:00Z");
  const auto b = a + hours(24.0);
  EXPECT_LT(a, b);
  EXPECT_DOUBLE_EQ(hours_between(b, a), 24.0);
  EXPECT_DOUBLE_EQ(hours_between(a, b), -24.0);
}

TEST(ManualClock, MovesOnlyWhenTold) {
  ManualClock clock(Timestamp::from_millis(1000));
  EXPECT_EQ(clock.now().millis(), 1000);
  clock.advance(std::chrono::milliseconds(500));
  EXPECT_EQ(clock.now().millis(), 1500);
  clock.set(Timestamp::from_millis(7));
  EXPECT_EQ(clock.now().millis(), 7);
}

TEST(EventKind, ClosedSet) {
  for (const char* k : {"read", "like", "comment", "impression", "dismiss"}) {
    EXPECT_EQ(to_string(parse_event_kind(k)), k);
  }
  EXPECT_THROW(parse_event_kind("share"), std::invalid_argument);
  EXPECT_TRUE(is_consuming(EventKind::kLike));
  EXPECT_FALSE(is_consuming(EventKind::kImpression));
}

TEST(SocialGraph, DirectedAndIdempotent) {
  SocialGraph g;
  EXPECT_TRUE(g.follow("a", "b"));
  EXPECT_FALSE(g.follow("a", "b"));
  EXPECT_TRUE(g.follows("a", "b"));
  EXPECT_FALSE(g.follows("b", "a"));
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_THROW(g.follow("a", "a"), std::invalid_argument);
  EXPECT_TRUE(g.followees("nobody").empty());
}

TEST(ValidateNews, AllFieldsPresent) {
  const auto item = validate_news(valid_news_body());
  EXPECT_EQ(item.id, "n1");
  EXPECT_EQ(item.category, "traffic");
  EXPECT_EQ(item.hashtags, (std::vector<std::string>{"jam", "road"}));
  EXPECT_EQ(item.location, (GeoPoint{63.43, 10.39}));
  EXPECT_EQ(item.created_at, Timestamp::parse("2024-06-01T12:00:00Z"));
  EXPECT_FALSE(item.media_ref.has_value());
}

TEST(ValidateNews, LatitudeOutOfRange) {
  auto body = valid_news_body();
  body["location"]["lat"] = 91;
  try {
    validate_news(body);
    FAIL() << "expected FieldError";
  } catch (const FieldError& e) {
    EXPECT_EQ(e.code(), "OutOfRange");
    EXPECT_EQ(e.field(), "lat");
  }
}

TEST(ValidateNews, MissingCreatedAt) {
  auto body = valid_news_body();
  body.erase("created_at");
  try {
    validate_news(body);
    FAIL() << "expected FieldError";
  } catch (const FieldError& e) {
    EXPECT_EQ(e.code(), "MissingField");
    EXPECT_EQ(e.field(), "created_at");
  }
}

TEST(ValidateNews, MissingLocationAndBadTypes) {
  auto body = valid_news_body();
  body.erase("location");
  EXPECT_THROW(validate_news(body), FieldError);
  body = valid_news_body();
  body["location"]["lon"] = "east";
  EXPECT_THROW(validate_news(body), FieldError);
  body = valid_news_body();
  body["created_at"] = "yesterday";
  EXPECT_THROW(validate_news(body), FieldError);
}

TEST(ValidateNewsProperty, NeverBuildsAnInvalidItem) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> coord(-200.0, 200.0);
  for (int i = 0; i < 2000; ++i) {
    auto body = valid_news_body();
    body["location"] = {{"lat", coord(gen)}, {"lon", coord(gen)}};
    body["hashtags"] = {"#A", "a", "B", "#b", "c"};
    try {
      const auto item = validate_news(body);
      EXPECT_TRUE(item.location.valid());
      EXPECT_TRUE(std::is_sorted(item.hashtags.begin(), item.hashtags.end()));
      EXPECT_EQ(std::adjacent_find(item.hashtags.begin(), item.hashtags.end()), item.hashtags.end());
      for (const auto& h : item.hashtags) EXPECT_EQ(h, to_lower_utf8(h));
    } catch (const FieldError& e) {
      EXPECT_EQ(e.code(), "OutOfRange");
    }
  }
}

TEST(ValidateEvent, KindsAndFields) {
  const json ok = {{"user_id", "u"}, {"news_id", "n"}, {"kind", "like"}, {"at", "2024-06-01T12:00:00Z"}};
  const auto ev = validate_event(ok);
  EXPECT_EQ(ev.kind, EventKind::kLike);
  EXPECT_FALSE(ev.location.has_value());

  auto bad = ok;
  bad["kind"] = "share";
  try {
    validate_event(bad);
    FAIL();
  } catch (const FieldError& e) {
    EXPECT_EQ(e.field(), "kind");
  }
  bad = ok;
  bad.erase("user_id");
  EXPECT_THROW(validate_event(bad), FieldError);
}

TEST(Json, NewsRoundTrip) {
  auto item = validate_news(valid_news_body());
  item.media_ref = "https://example.org/a.jpg";
  EXPECT_EQ(validate_news(to_json(item)), item);
}

TEST(Json, CoordinatesKeepSixFractionalDigits) {
  const std::string text = dump_json(to_json(GeoPoint{63.0, 10.5}));
  EXPECT_EQ(text, R"({"lat":63.000000,"lon":10.500000})");
  EXPECT_EQ(dump_json(to_json(GeoPoint{63.123456789, -0.1})), R"({"lat":63.123456789,"lon":-0.100000})");
}

TEST(Lowercase, HandlesLatin1) {
  EXPECT_EQ(to_lower_utf8("TRØNDELAG Ærlig ÅS"), "trøndelag ærlig ås");
}
