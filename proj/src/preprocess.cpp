#include <pwg/preprocess.hpp>

namespace pwg {

static Image<float> preprocess_branch(const Shot &shot, Branch b, const Image<float> &radiance) {
    if (b == Branch::Diffuse) return preprocess_diffuse(radiance, shot.albedo(b));
    return preprocess_specular(radiance);
}

Image<float> preprocess_noisy(const Shot &shot, Branch b) { return preprocess_branch(shot, b, shot.noisy(b)); }

Image<float> preprocess_reference(const Shot &shot, Branch b) {
    return preprocess_branch(shot, b, shot.reference(b));
}

}  // namespace pwg
