#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "trajcogn/balltree.hpp"
#include "trajcogn/rng.hpp"

using namespace trajcogn;

namespace {

std::vector<Poi> random_pois(Rng& rng, int n, double spread_deg) {
    std::vector<Poi> pois(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& p = pois[static_cast<std::size_t>(i)];
        p.lat = 30.0 + rng.uniform(-spread_deg, spread_deg);
        p.lng = 104.0 + rng.uniform(-spread_deg, spread_deg);
        p.name = "P" + std::to_string(i);
        p.address = std::to_string(i) + " Road";
    }
    return pois;
}

}  // namespace

TEST_CASE("ball tree agrees with a brute force scan") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.index(400));
        const auto pois = random_pois(rng, n, 0.05);
        const BallTree tree(pois, 16);
        for (int q = 0; q < 20; ++q) {
            const double lat = 30.0 + rng.uniform(-0.06, 0.06);
            const double lng = 104.0 + rng.uniform(-0.06, 0.06);
            const int k = 1 + static_cast<int>(rng.index(12));
            const auto fast = tree.query_knn(lat, lng, k);
            const auto slow = knn_brute_force(pois, lat, lng, k);
            REQUIRE(fast.size() == slow.size());
            for (std::size_t i = 0; i < fast.size(); ++i) {
                CHECK(fast[i].poi_index == slow[i].poi_index);
                CHECK(fast[i].distance_m == slow[i].distance_m);
            }
        }
    }
}

TEST_CASE("ball tree ties resolve to the lower insertion index") {
    // Five copies of the same location: ranks must follow input order.
    std::vector<Poi> pois(5, Poi{30.0, 104.0, "dup", "1 Road"});
    pois.push_back({30.001, 104.0, "far", "2 Road"});
    const BallTree tree(pois, 2);
    const auto nn = tree.query_knn(30.0, 104.0, 6);
    REQUIRE(nn.size() == 6);
    for (int i = 0; i < 5; ++i) {
        CHECK(nn[static_cast<std::size_t>(i)].poi_index == i);
        CHECK(nn[static_cast<std::size_t>(i)].distance_m == 0.0);
    }
    CHECK(nn[5].poi_index == 5);
}

TEST_CASE("ball tree handles small and clustered inputs") {
    Rng rng(55);
    // Two tight clusters force unbalanced balls and real pruning.
    std::vector<Poi> pois;
    for (int i = 0; i < 150; ++i) {
        const bool left = i % 2 == 0;
        Poi p;
        p.lat = (left ? 30.0 : 30.5) + rng.uniform(-1e-4, 1e-4);
        p.lng = (left ? 104.0 : 104.5) + rng.uniform(-1e-4, 1e-4);
        p.name = "C" + std::to_string(i);
        pois.push_back(std::move(p));
    }
    const BallTree tree(pois, 8);
    for (int q = 0; q < 30; ++q) {
        const double lat = rng.uniform(29.9, 30.6);
        const double lng = rng.uniform(103.9, 104.6);
        const auto fast = tree.query_knn(lat, lng, 7);
        const auto slow = knn_brute_force(pois, lat, lng, 7);
        REQUIRE(fast.size() == 7);
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(fast[i].poi_index == slow[i].poi_index);
        }
    }
    // k larger than the point count returns everything.
    const std::vector<Poi> tiny = {{30.0, 104.0, "a", ""}, {30.1, 104.1, "b", ""}};
    const BallTree small(tiny, 16);
    CHECK(small.query_knn(30.0, 104.0, 10).size() == 2);
    CHECK_THROWS_AS(small.query_knn(30.0, 104.0, 0), DatasetError);
    CHECK_THROWS_AS(BallTree(std::vector<Poi>{}), DatasetError);
}

TEST_CASE("od context ranks the closest poi first") {
    std::vector<Poi> pois = {
        {30.00, 104.00, "origin cafe", "1 A St"},
        {30.00, 104.01, "mid market", "2 B St"},
        {30.00, 104.05, "dest park", "3 C St"},
    };
    const PoiIndex index(std::move(pois));
    const auto ctx = index.od_context(30.0, 104.0, 30.0, 104.05, 2);
    REQUIRE(ctx.origin.size() == 2);
    REQUIRE(ctx.destination.size() == 2);
    CHECK(index.poi(ctx.origin[0].poi_index).name == "origin cafe");
    CHECK(index.poi(ctx.destination[0].poi_index).name == "dest park");
    CHECK(ctx.origin[0].distance_m <= ctx.origin[1].distance_m);
}

TEST_CASE("poi csv loading handles quoting and errors") {
    const auto dir = std::filesystem::temp_directory_path() / "trajcogn_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "pois.csv").string();
    {
        std::ofstream out(path);
        out << "lat,lng,name,address\n"
            << "30.1,104.2,\"Cafe, The Good One\",\"12 Main St, Block 3\"\n"
            << "30.2,104.3,Plain Market,45 Side St\n";
    }
    const auto pois = load_pois_csv(path);
    REQUIRE(pois.size() == 2);
    CHECK(pois[0].name == "Cafe, The Good One");
    CHECK(pois[0].address == "12 Main St, Block 3");
    CHECK(pois[1].lat == 30.2);

    const auto bad = (dir / "pois_bad.csv").string();
    {
        std::ofstream out(bad);
        out << "lng,lat,name,address\n30.1,104.2,x,y\n";
    }
    CHECK_THROWS_AS(load_pois_csv(bad), DatasetError);
}
