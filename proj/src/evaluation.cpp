#include "hscat/evaluation.hpp"

#include <cmath>
#include <random>

#include "hscat/geometry.hpp"
#include "hscat/render.hpp"

namespace hscat::evaluation {

namespace {

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

MeanStd stats(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= double(v.size());
    for (double x : v) m.std += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(m.std / double(v.size()));
    return m;
}

}  // namespace

HomoTable homo_eval(tensois::Model& model, const dataset::DatasetConfig& data, const HomoConfig& cfg) {
    if (!model.trained()) throw ConfigError("homo_eval needs a trained model");
    if (data.light_kind != dataset::LightKind::point) throw ConfigError("homo_eval uses point lighting");
    if (cfg.draws < 1) throw ConfigError("homo_eval needs at least one draw");
    std::vector<std::string> shapes = cfg.shapes;
    if (shapes.empty()) {
        const auto& all = geometry::builtin_shape_names();
        shapes.assign(all.begin(), all.begin() + std::min<std::ptrdiff_t>(5, std::ptrdiff_t(all.size())));
    }
    const tensor::DensityRange range = tensor::kPointDensity;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    HomoTable table;
    std::vector<double> es, ea;
    for (const auto& shape : shapes) {
        const OccupancyMask mask = geometry::occupancy_mask(geometry::grid_sdf(geometry::builtin_shape(shape), data.grid));
        render::SceneConfig scene;
        scene.grid = data.grid;
        scene.rig = data.rig;
        lighting::PointLight p;
        p.intensity = data.light_intensity;
        scene.light.light = p;
        std::array<Image, 6> fg;
        for (int v = 0; v < render::CameraRig::kViews; ++v) fg[std::size_t(v)] = render::foreground_mask(mask, scene, v);

        for (int d = 0; d < cfg.draws; ++d) {
            HomoRow row;
            row.shape = shape;
            row.draw = d;
            row.gt_sigma_t = range.lo + (range.hi - range.lo) * u01(rng);
            row.gt_alpha = 0.3 + 0.65 * u01(rng);
            tensor::ScatterField f{DenseGrid(data.grid.shape(), 1.0), DenseGrid(data.grid.shape(), row.gt_alpha),
                                   row.gt_sigma_t};
            std::array<Image, 6> views;
            render::RenderJob job{&f, &mask, scene, 0, data.quality};
            for (int v = 0; v < render::CameraRig::kViews; ++v) {
                job.view = v;
                views[std::size_t(v)] = render::raymarch_render(job);
            }
            const tensois::Prediction pred = tensois::predict(model, views, fg);
            std::vector<double> ps, pa;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) continue;
                ps.push_back(pred.s_hat * pred.sigma[i] / range.hi);
                pa.push_back(pred.alpha[i]);
            }
            const MeanStd ms = stats(ps), ma = stats(pa);
            row.sigma_mean = ms.mean;
            row.sigma_std = ms.std;
            row.alpha_mean = ma.mean;
            row.alpha_std = ma.std;
            es.push_back(std::abs(ms.mean - row.gt_sigma_t / range.hi));
            ea.push_back(std::abs(ma.mean - row.gt_alpha));
            table.rows.push_back(row);
        }
    }
    const MeanStd s = stats(es), a = stats(ea);
    table.sigma_mae = s.mean;
    table.sigma_mae_std = s.std;
    table.alpha_mae = a.mean;
    table.alpha_mae_std = a.std;
    return table;
}

std::string homo_csv(const HomoTable& t) {
    std::string out = "shape,draw,gt_sigma_t,gt_alpha,sigma_mean,sigma_std,alpha_mean,alpha_std\n";
    char buf[256];
    for (const auto& r : t.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.shape.c_str(), r.draw,
                      r.gt_sigma_t, r.gt_alpha, r.sigma_mean, r.sigma_std, r.alpha_mean, r.alpha_std);
        out += buf;
    }
    return out;
}

}  // namespace hscat::evaluation
