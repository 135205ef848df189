#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ron/eval.hpp"
#include "ron/gradcheck.hpp"
#include "ron/inference.hpp"
#include "ron/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 ok, 2 configuration, 3 file/parse, 4 numeric
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

ron::Model<float> load_model(const fs::path& weights, int input_size, int num_classes,
                             int rf_channels) {
    ron::ModelConfig cfg;
    cfg.input_size = input_size;
    cfg.num_classes = num_classes;
    cfg.rf_channels = rf_channels;
    ron::Model<float> model = ron::build_model<float>(cfg, 0);
    ron::load_weights(weights, model);
    return model;
}

std::array<bool, ron::kNumScales> parse_scales(const std::string& spec) {
    std::array<bool, ron::kNumScales> enabled{false, false, false, false};
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const int k = std::stoi(item);
        if (k < 4 || k > 7) throw ron::ConfigError("--scales entries must be in 4..7");
        enabled[k - 4] = true;
    }
    return enabled;
}

int cmd_gen_data(const std::string& out, int n, uint64_t seed, int size) {
    ron::Dataset ds = ron::gen_shapes(n, size, seed);
    ron::save_dataset(out, ds);
    std::cout << "wrote " << ds.samples.size() << " images to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out, const std::vector<std::string>& overrides) {
    ron::TrainConfig cfg;
    if (!config_path.empty()) cfg = ron::parse_train_config(config_path);
    for (const std::string& kv : overrides) ron::apply_override(cfg, kv);
    cfg.validate();

    ron::Dataset ds = ron::load_dataset(data);
    cfg.model.num_classes = static_cast<int>(ds.class_names.size()) - 1;

    ron::Model<float> model = ron::build_model<float>(cfg.model, cfg.seed);
    ron::TrainResult res = ron::train(model, ds, cfg, out);
    if (!res.log.empty())
        std::cout << "final loss " << res.log.back().loss.total << " after "
                  << res.log.size() << " iterations\n";
    std::cout << "weights written to " << (fs::path(out) / "weights.ronw").string() << "\n";
    return 0;
}

struct EvalFlags {
    std::string weights, data, metrics_out;
    int input_size = 128;
    int rf_channels = 32;
    double iou = 0.5;
    bool coco_style = false;
    bool all_point = false;
    bool no_objectness = false;
    std::string scales = "4,5,6,7";
};

int cmd_eval(const EvalFlags& f) {
    ron::Dataset ds = ron::load_dataset(f.data);
    const int K = static_cast<int>(ds.class_names.size()) - 1;
    ron::Model<float> model = load_model(f.weights, f.input_size, K, f.rf_channels);
    ron::AnchorSet anchors = ron::generate_anchors(ds.image_size);

    ron::DetectOptions opt;
    opt.use_objectness = !f.no_objectness;
    opt.scale_enabled = parse_scales(f.scales);

    std::vector<ron::EvalDetection> dets;
    std::vector<ron::EvalGt> gts;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const ron::Sample& smp = ds.samples[i];
        for (const ron::Detection& d :
             ron::detect(model, smp.pixels, smp.size, opt, &anchors))
            dets.push_back({static_cast<int>(i), d.class_id, d.score, d.box});
        for (const ron::GtObject& g : smp.objects)
            gts.push_back({static_cast<int>(i), g.cls, g.box, false});
    }

    const auto aps = ron::per_class_ap(dets, gts, K, f.iou, !f.all_point);
    json out;
    out["num_images"] = ds.samples.size();
    out["iou_thresh"] = f.iou;
    out["mAP"] = ron::mean_ap(aps);
    for (const auto& [c, ap] : aps) out["per_class"][ds.class_names[c]] = ap;
    if (f.coco_style) out["coco_style_ap"] = ron::coco_style_ap(dets, gts, K, !f.all_point);

    std::ofstream jf(f.metrics_out);
    if (!jf) throw ron::IoError("cannot write " + f.metrics_out);
    jf << out.dump(2) << "\n";

    fs::path csv_path = fs::path(f.metrics_out).replace_extension(".csv");
    std::ofstream cf(csv_path);
    cf << "class,ap\n";
    for (const auto& [c, ap] : aps) cf << ds.class_names[c] << "," << ap << "\n";

    std::cout << "mAP " << ron::mean_ap(aps) << " over " << aps.size() << " classes\n";
    return 0;
}

int cmd_detect(const std::string& weights, const std::string& image, const std::string& out,
               int input_size, int num_classes, int rf_channels, double conf, double nms_t,
               int top_k) {
    ron::Model<float> model = load_model(weights, input_size, num_classes, rf_channels);
    int w = 0, h = 0;
    std::vector<uint8_t> pixels = ron::read_ppm(image, w, h);
    if (w != h || w % 64 != 0)
        throw ron::ConfigError("detect expects a square image with side divisible by 64");

    ron::DetectOptions opt;
    opt.conf_thresh = conf;
    opt.nms_thresh = nms_t;
    opt.top_k = top_k;
    const auto dets = ron::detect(model, pixels, w, opt);

    std::ofstream of(out);
    if (!of) throw ron::IoError("cannot write " + out);
    const std::string image_id = fs::path(image).stem().string();
    for (const ron::Detection& d : dets) {
        json line = {{"image_id", image_id},
                     {"class", d.class_id},
                     {"score", d.score},
                     {"box", {d.box.l(), d.box.t(), d.box.r(), d.box.b()}}};
        of << line.dump() << "\n";
    }
    std::cout << dets.size() << " detections written to " << out << "\n";
    return 0;
}

int cmd_proposals(const std::string& weights, const std::string& data,
                  const std::string& n_list, const std::string& curve_out, int input_size,
                  int rf_channels) {
    ron::Dataset ds = ron::load_dataset(data);
    const int K = static_cast<int>(ds.class_names.size()) - 1;
    ron::Model<float> model = load_model(weights, input_size, K, rf_channels);
    ron::AnchorSet anchors = ron::generate_anchors(ds.image_size);

    std::vector<int> ns;
    {
        std::stringstream ss(n_list);
        std::string item;
        while (std::getline(ss, item, ',')) ns.push_back(std::stoi(item));
    }
    if (ns.empty()) throw ron::ConfigError("--n-list is empty");
    const int n_max = *std::max_element(ns.begin(), ns.end());

    std::vector<std::vector<ron::Detection>> props;
    std::vector<std::vector<ron::Box>> gt_boxes;
    for (const ron::Sample& smp : ds.samples) {
        props.push_back(ron::proposals(model, smp.pixels, smp.size, n_max, &anchors));
        std::vector<ron::Box> g;
        for (const ron::GtObject& obj : smp.objects) g.push_back(obj.box);
        gt_boxes.push_back(std::move(g));
    }

    std::ofstream cf(curve_out);
    if (!cf) throw ron::IoError("cannot write " + curve_out);
    cf << "N,recall\n";
    for (int n : ns) {
        const double r = ron::recall_at(props, gt_boxes, n, 0.5);
        cf << n << "," << r << "\n";
        std::cout << "recall@" << n << " = " << r << "\n";
    }
    return 0;
}

int cmd_gradcheck(const std::string& ops) {
    std::vector<ron::GradCheckReport> reports =
        ops == "all" ? ron::run_gradcheck() : ron::run_gradcheck(ops, 1234);
    if (reports.empty()) {
        std::cerr << "unknown op '" << ops << "'; available:";
        for (const std::string& n : ron::gradcheck_op_names()) std::cerr << " " << n;
        std::cerr << "\n";
        return kExitConfig;
    }
    bool ok = true;
    double worst = 0;
    for (const auto& r : reports) {
        std::cout << (r.passed ? "PASS" : "FAIL") << " " << r.op << " max rel err "
                  << r.max_rel_err << " over " << r.coords_checked << " coordinates\n";
        ok = ok && r.passed;
        worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "max relative error " << worst << " (tolerance " << ron::kGradCheckTol
              << ")\n";
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RON-style single-shot detector: reverse-connection features, "
                 "objectness prior, multi-task training"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
    std::string gen_out;
    int gen_n = 100, gen_size = 128;
    uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "number of images");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--size", gen_size, "image size (square)");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_config, tr_data, tr_out;
    std::vector<std::string> tr_set;
    tr->add_option("--config", tr_config, "key=value config file");
    tr->add_option("--data", tr_data, "dataset directory or manifest")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--set", tr_set, "config override key=value (repeatable)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate detection metrics on a dataset");
    EvalFlags ef;
    ev->add_option("--weights", ef.weights, "weight file")->required();
    ev->add_option("--data", ef.data, "dataset directory or manifest")->required();
    ev->add_option("--metrics-out", ef.metrics_out, "metrics JSON path")->required();
    ev->add_option("--input-size", ef.input_size, "model input size");
    ev->add_option("--rf-channels", ef.rf_channels, "reverse-fusion channels");
    ev->add_option("--iou", ef.iou, "AP IoU threshold");
    ev->add_flag("--coco-style", ef.coco_style, "also report mean AP over IoU 0.5:0.05:0.95");
    ev->add_flag("--all-point", ef.all_point, "all-point AP instead of 11-point");
    ev->add_flag("--no-objectness", ef.no_objectness, "score by p^cls|obj alone");
    ev->add_option("--scales", ef.scales, "enabled detection scales, e.g. 4,5,6,7");

    // detect
    auto* de = app.add_subcommand("detect", "run detection on one image");
    std::string de_weights, de_image, de_out;
    int de_input = 128, de_classes = 3, de_rf = 32, de_topk = 200;
    double de_conf = 0.01, de_nms = 0.45;
    de->add_option("--weights", de_weights, "weight file")->required();
    de->add_option("--image", de_image, "P6 PPM image")->required();
    de->add_option("--out", de_out, "output JSON-lines path")->required();
    de->add_option("--input-size", de_input, "model input size");
    de->add_option("--num-classes", de_classes, "number of foreground classes");
    de->add_option("--rf-channels", de_rf, "reverse-fusion channels");
    de->add_option("--conf", de_conf, "score threshold");
    de->add_option("--nms", de_nms, "NMS IoU threshold");
    de->add_option("--top-k", de_topk, "max detections");

    // proposals
    auto* pr = app.add_subcommand("proposals", "recall-vs-proposals curve");
    std::string pr_weights, pr_data, pr_nlist = "1,5,10,50,100,300", pr_curve;
    int pr_input = 128, pr_rf = 32;
    pr->add_option("--weights", pr_weights, "weight file")->required();
    pr->add_option("--data", pr_data, "dataset directory or manifest")->required();
    pr->add_option("--n-list", pr_nlist, "comma-separated proposal counts");
    pr->add_option("--curve-out", pr_curve, "output CSV path")->required();
    pr->add_option("--input-size", pr_input, "model input size");
    pr->add_option("--rf-channels", pr_rf, "reverse-fusion channels");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_ops = "all";
    gc->add_option("--ops", gc_ops, "'all' or one op name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_seed, gen_size);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out, tr_set);
        if (ev->parsed()) return cmd_eval(ef);
        if (de->parsed())
            return cmd_detect(de_weights, de_image, de_out, de_input, de_classes, de_rf,
                              de_conf, de_nms, de_topk);
        if (pr->parsed())
            return cmd_proposals(pr_weights, pr_data, pr_nlist, pr_curve, pr_input, pr_rf);
        if (gc->parsed()) return cmd_gradcheck(gc_ops);
    } catch (const ron::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ron::DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ron::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ron::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
