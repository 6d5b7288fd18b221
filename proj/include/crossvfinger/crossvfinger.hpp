#ifndef CROSSVFINGER_CROSSVFINGER_HPP
#define CROSSVFINGER_CROSSVFINGER_HPP

#include "crossvfinger/coror.hpp"
#include "crossvfinger/descriptor_io.hpp"
#include "crossvfinger/error.hpp"
#include "crossvfinger/eval.hpp"
#include "crossvfinger/fusion.hpp"
#include "crossvfinger/gaborhog.hpp"
#include "crossvfinger/hash.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/matcher.hpp"
#include "crossvfinger/orientation.hpp"
#include "crossvfinger/parallel.hpp"
#include "crossvfinger/pipeline.hpp"
#include "crossvfinger/preprocess.hpp"
#include "crossvfinger/synth.hpp"

#endif  // CROSSVFINGER_CROSSVFINGER_HPP
