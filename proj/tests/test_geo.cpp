#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trajcogn/geo.hpp"
#include "trajcogn/rng.hpp"

using namespace trajcogn;

TEST_CASE("haversine matches the great-circle arc on a meridian") {
    // On a meridian the distance is exactly R * dphi, which gives an
    // independent closed form to pin the formula against.
    CHECK_THAT(geo::haversine_m(30.0, 104.0, 30.001, 104.0),
               Catch::Matchers::WithinRel(111.19492664455873, 1e-9));
    CHECK_THAT(geo::haversine_m(30.001, 104.0, 30.003, 104.0),
               Catch::Matchers::WithinRel(222.38985328911747, 1e-9));
    CHECK_THAT(geo::haversine_m(-45.0, 7.25, -45.002, 7.25),
               Catch::Matchers::WithinRel(222.38985328911747, 1e-9));
}

TEST_CASE("haversine is a metric") {
    CHECK(geo::haversine_m(12.34, 56.78, 12.34, 56.78) == 0.0);
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const double lat_a = rng.uniform(-80.0, 80.0);
        const double lng_a = rng.uniform(-180.0, 180.0);
        const double lat_b = rng.uniform(-80.0, 80.0);
        const double lng_b = rng.uniform(-180.0, 180.0);
        const double lat_c = rng.uniform(-80.0, 80.0);
        const double lng_c = rng.uniform(-180.0, 180.0);
        const double ab = geo::haversine_m(lat_a, lng_a, lat_b, lng_b);
        const double ba = geo::haversine_m(lat_b, lng_b, lat_a, lng_a);
        const double bc = geo::haversine_m(lat_b, lng_b, lat_c, lng_c);
        const double ac = geo::haversine_m(lat_a, lng_a, lat_c, lng_c);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ac <= ab + bc + 1e-6);
    }
}

TEST_CASE("bearing covers the compass") {
    CHECK_THAT(geo::bearing_deg(0.0, 0.0, 0.001, 0.0),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(geo::bearing_deg(0.0, 0.0, 0.0, 0.001),
               Catch::Matchers::WithinAbs(90.0, 1e-9));
    CHECK_THAT(geo::bearing_deg(0.001, 0.0, 0.0, 0.0),
               Catch::Matchers::WithinAbs(180.0, 1e-9));
    CHECK_THAT(geo::bearing_deg(0.0, 0.001, 0.0, 0.0),
               Catch::Matchers::WithinAbs(270.0, 1e-9));
    // At the equator a 45 degree heading moves lat and lng equally.
    CHECK_THAT(geo::bearing_deg(0.0, 0.0, 0.0001, 0.0001),
               Catch::Matchers::WithinAbs(45.0, 1e-2));
    CHECK(geo::bearing_deg(10.0, 10.0, 10.0, 10.0) == 0.0);

    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const double b = geo::bearing_deg(rng.uniform(-80.0, 80.0),
                                          rng.uniform(-180.0, 180.0),
                                          rng.uniform(-80.0, 80.0),
                                          rng.uniform(-180.0, 180.0));
        CHECK(b >= 0.0);
        CHECK(b < 360.0);
    }
}

TEST_CASE("local projection preserves short distances") {
    const geo::LocalProjection proj(30.6, 104.1);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double lat_a = 30.6 + rng.uniform(-0.002, 0.002);
        const double lng_a = 104.1 + rng.uniform(-0.002, 0.002);
        const double lat_b = 30.6 + rng.uniform(-0.002, 0.002);
        const double lng_b = 104.1 + rng.uniform(-0.002, 0.002);
        double ax = 0.0, ay = 0.0, bx = 0.0, by = 0.0;
        proj.to_xy(lat_a, lng_a, ax, ay);
        proj.to_xy(lat_b, lng_b, bx, by);
        const double planar = std::hypot(bx - ax, by - ay);
        const double sphere = geo::haversine_m(lat_a, lng_a, lat_b, lng_b);
        CHECK_THAT(planar, Catch::Matchers::WithinAbs(sphere, 0.01 + sphere * 1e-3));
    }
}

TEST_CASE("point to segment distance clamps to the endpoints") {
    double offset = 0.0;
    // Perpendicular foot in the middle.
    CHECK_THAT(geo::point_segment_distance_xy(5.0, 3.0, 0.0, 0.0, 10.0, 0.0, &offset),
               Catch::Matchers::WithinAbs(3.0, 1e-12));
    CHECK_THAT(offset, Catch::Matchers::WithinAbs(5.0, 1e-12));
    // Before the start.
    CHECK_THAT(geo::point_segment_distance_xy(-4.0, 3.0, 0.0, 0.0, 10.0, 0.0, &offset),
               Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK(offset == 0.0);
    // Past the end.
    CHECK_THAT(geo::point_segment_distance_xy(13.0, -4.0, 0.0, 0.0, 10.0, 0.0, &offset),
               Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK_THAT(offset, Catch::Matchers::WithinAbs(10.0, 1e-12));
    // Degenerate zero-length segment.
    CHECK_THAT(geo::point_segment_distance_xy(1.0, 1.0, 2.0, 2.0, 2.0, 2.0, &offset),
               Catch::Matchers::WithinAbs(std::sqrt(2.0), 1e-12));
    CHECK(offset == 0.0);
}

TEST_CASE("rng streams are deterministic and well ranged") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.uniform_int(-3, 3);
        CHECK(k >= -3);
        CHECK(k <= 3);
    }
    // Zero stddev must return the mean exactly.
    CHECK(r.normal(5.5, 0.0) == 5.5);

    // Sample moments land near the target distribution.
    Rng g(9);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = g.normal(2.0, 3.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(2.0, 0.1));
    CHECK_THAT(var, Catch::Matchers::WithinAbs(9.0, 0.5));
}
