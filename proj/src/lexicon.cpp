#include "badcm/surrogate.hpp"

namespace badcm {

// Ranked substitutes per word, in the order a masked language model would
// plausibly propose them. Some lists contain function words on purpose; the
// candidate filter removes them.
const Lexicon& bundled_lexicon() {
  static const Lexicon lexicon = {
      // people
      {"man", {"gentleman", "guy", "fellow", "male", "person", "the"}},
      {"woman", {"lady", "female", "gal", "person", "madam"}},
      {"person", {"individual", "human", "someone", "figure", "soul"}},
      {"people", {"persons", "folks", "crowd", "individuals", "humans"}},
      {"child", {"kid", "youngster", "toddler", "youth", "minor"}},
      {"children", {"kids", "youngsters", "youths", "toddlers"}},
      {"boy", {"lad", "kid", "youngster", "son", "youth"}},
      {"girl", {"lass", "kid", "maiden", "daughter", "youngster"}},
      {"player", {"athlete", "competitor", "sportsman", "participant"}},
      {"baby", {"infant", "newborn", "toddler", "babe"}},
      {"friend", {"companion", "pal", "buddy", "mate"}},
      {"crowd", {"throng", "mass", "group", "gathering"}},
      {"group", {"bunch", "cluster", "set", "collection", "team"}},
      // animals
      {"dog", {"puppy", "hound", "canine", "pup", "mutt", "pooch"}},
      {"cat", {"kitten", "kitty", "feline", "tomcat"}},
      {"horse", {"pony", "stallion", "mare", "steed"}},
      {"bird", {"fowl", "songbird", "sparrow", "avian"}},
      {"cow", {"cattle", "bovine", "heifer", "calf"}},
      {"sheep", {"lamb", "ewe", "ram", "flock"}},
      {"elephant", {"pachyderm", "mammoth", "tusker"}},
      {"giraffe", {"camelopard", "ruminant"}},
      {"zebra", {"equine", "quagga"}},
      {"bear", {"grizzly", "cub", "bruin"}},
      {"animal", {"creature", "beast", "critter", "mammal"}},
      // things
      {"apple", {"fruit", "pome", "crabapple", "pippin", "an"}},
      {"banana", {"plantain", "fruit", "bananas", "plantains"}},
      {"orange", {"tangerine", "amber", "apricot", "citrus", "ginger"}},
      {"fruit", {"produce", "berry", "harvest", "crop"}},
      {"tree", {"sapling", "oak", "pine", "shrub", "timber", "bush"}},
      {"flower", {"blossom", "bloom", "floret", "petal", "posy"}},
      {"plant", {"shrub", "herb", "vegetation", "sprout"}},
      {"leaf", {"foliage", "frond", "blade", "leaflet"}},
      {"grass", {"lawn", "turf", "meadow", "sod"}},
      {"car", {"automobile", "vehicle", "sedan", "auto", "coupe", "motorcar"}},
      {"truck", {"lorry", "pickup", "van", "rig"}},
      {"bus", {"coach", "minibus", "shuttle", "transit"}},
      {"train", {"locomotive", "railway", "tram", "subway"}},
      {"bike", {"bicycle", "cycle", "motorbike", "scooter"}},
      {"bicycle", {"bike", "cycle", "velocipede"}},
      {"motorcycle", {"motorbike", "scooter", "moped", "chopper"}},
      {"boat", {"ship", "vessel", "canoe", "yacht", "ferry"}},
      {"plane", {"airplane", "aircraft", "jet", "airliner"}},
      {"airplane", {"plane", "aircraft", "jet", "airliner"}},
      {"ball", {"sphere", "orb", "globe", "bead", "football"}},
      {"cloud", {"puff", "vapor", "haze", "mist", "nimbus"}},
      {"sky", {"heavens", "firmament", "atmosphere", "air"}},
      {"sun", {"sunlight", "sunshine", "daylight"}},
      {"water", {"sea", "lake", "ocean", "river", "pond"}},
      {"beach", {"shore", "coast", "seaside", "strand"}},
      {"mountain", {"peak", "hill", "summit", "ridge"}},
      {"road", {"street", "highway", "lane", "avenue"}},
      {"street", {"road", "avenue", "lane", "boulevard"}},
      {"city", {"town", "metropolis", "downtown", "municipality"}},
      {"building", {"structure", "edifice", "tower", "house"}},
      {"house", {"home", "dwelling", "residence", "cottage"}},
      {"room", {"chamber", "space", "hall", "den"}},
      {"kitchen", {"galley", "kitchenette", "cookhouse"}},
      {"table", {"desk", "counter", "bench", "stand"}},
      {"chair", {"seat", "stool", "bench", "armchair"}},
      {"bed", {"mattress", "cot", "bunk", "couch"}},
      {"window", {"pane", "glass", "opening", "casement"}},
      {"door", {"doorway", "gate", "entrance", "portal"}},
      {"food", {"meal", "dish", "cuisine", "fare"}},
      {"pizza", {"pie", "flatbread", "slice"}},
      {"cake", {"dessert", "pastry", "torte", "gateau"}},
      {"plate", {"dish", "platter", "saucer", "tray"}},
      {"cup", {"mug", "glass", "tumbler", "goblet"}},
      {"phone", {"telephone", "cellphone", "handset", "mobile"}},
      {"computer", {"laptop", "pc", "desktop", "machine"}},
      {"sign", {"signboard", "placard", "notice", "billboard"}},
      {"umbrella", {"parasol", "sunshade", "canopy"}},
      {"hat", {"cap", "helmet", "beanie", "bonnet"}},
      {"shirt", {"top", "tee", "blouse", "jersey"}},
      {"bag", {"sack", "pouch", "tote", "satchel"}},
      {"picture", {"photo", "image", "snapshot", "photograph", "shot"}},
      {"photo", {"picture", "image", "snapshot", "photograph", "shot"}},
      {"image", {"picture", "photo", "depiction", "snapshot"}},
      {"object", {"item", "thing", "article", "shape"}},
      {"shape", {"form", "figure", "outline", "silhouette"}},
      {"field", {"meadow", "pasture", "lawn", "ground"}},
      {"snow", {"frost", "ice", "sleet", "powder"}},
      {"park", {"garden", "green", "playground", "grounds"}},
      {"background", {"backdrop", "setting", "scene", "surroundings"}},
      {"scene", {"view", "setting", "landscape", "sight"}},
      {"wall", {"partition", "barrier", "fence", "panel"}},
      {"floor", {"ground", "flooring", "deck", "surface"}},
      {"light", {"lamp", "glow", "lantern", "beam"}},
      {"game", {"match", "contest", "sport", "competition"}},
      {"frisbee", {"disc", "flyer", "saucer"}},
      {"kite", {"glider", "flyer", "streamer"}},
      {"skateboard", {"board", "deck", "longboard"}},
      {"surfboard", {"board", "longboard", "paddleboard"}},
      {"toilet", {"lavatory", "restroom", "commode"}},
      {"clock", {"timepiece", "watch", "dial"}},
      {"vase", {"jar", "urn", "pot", "vessel"}},
      {"book", {"volume", "novel", "tome", "publication"}},
      // colours
      {"red", {"crimson", "scarlet", "ruby", "cherry", "maroon", "rosy"}},
      {"green", {"emerald", "lime", "jade", "olive", "verdant"}},
      {"blue", {"azure", "navy", "cobalt", "sapphire", "cyan", "indigo"}},
      {"yellow", {"golden", "lemon", "amber", "gold", "canary", "blond"}},
      {"purple", {"violet", "lilac", "lavender", "plum", "mauve", "magenta"}},
      {"white", {"snowy", "ivory", "pale", "milky", "pearl", "cream"}},
      {"black", {"dark", "ebony", "jet", "inky", "charcoal", "sable"}},
      {"gray", {"grey", "silver", "ashen", "slate", "smoky"}},
      {"grey", {"gray", "silver", "ashen", "slate", "smoky"}},
      {"brown", {"tan", "chocolate", "beige", "bronze", "coffee"}},
      {"pink", {"rose", "salmon", "coral", "blush", "fuchsia"}},
      {"colorful", {"vibrant", "bright", "vivid", "multicolored"}},
      {"bright", {"vivid", "brilliant", "shiny", "radiant", "luminous"}},
      {"dark", {"dim", "shadowy", "gloomy", "murky", "black"}},
      // sizes and qualities
      {"small", {"little", "tiny", "mini", "compact", "petite", "minor"}},
      {"large", {"big", "huge", "giant", "massive", "great", "sizable"}},
      {"big", {"large", "huge", "giant", "massive", "great", "hefty"}},
      {"tiny", {"small", "little", "minute", "wee", "miniature", "mini"}},
      {"huge", {"enormous", "massive", "giant", "vast", "immense"}},
      {"little", {"small", "tiny", "wee", "mini", "slight"}},
      {"tall", {"high", "lofty", "towering", "big"}},
      {"long", {"lengthy", "extended", "elongated", "tall"}},
      {"short", {"brief", "small", "low", "squat"}},
      {"old", {"aged", "elderly", "ancient", "vintage", "antique"}},
      {"young", {"youthful", "juvenile", "little", "new"}},
      {"new", {"fresh", "modern", "recent", "novel"}},
      {"beautiful", {"lovely", "pretty", "gorgeous", "stunning", "attractive"}},
      {"pretty", {"lovely", "beautiful", "cute", "attractive"}},
      {"happy", {"cheerful", "joyful", "glad", "smiling", "merry"}},
      {"empty", {"vacant", "bare", "deserted", "blank"}},
      {"busy", {"crowded", "bustling", "hectic", "packed"}},
      {"round", {"circular", "spherical", "rounded", "curved"}},
      {"soft", {"fluffy", "gentle", "smooth", "plush"}},
      {"plain", {"simple", "bare", "blank", "uniform"}},
      {"single", {"lone", "solitary", "sole", "one"}},
      {"two", {"pair", "couple", "twin", "both"}},
      {"several", {"many", "multiple", "various", "numerous"}},
      {"many", {"numerous", "several", "lots", "multiple"}},
      // positions and directions
      {"left", {"leftmost", "port", "west", "western", "sinister"}},
      {"right", {"rightmost", "starboard", "east", "eastern", "dexter"}},
      {"top", {"upper", "summit", "peak", "crest", "up", "head"}},
      {"bottom", {"base", "lower", "foot", "floor", "underside", "down"}},
      {"center", {"middle", "centre", "core", "heart", "midpoint", "hub"}},
      {"middle", {"center", "centre", "midst", "heart", "core"}},
      {"corner", {"angle", "edge", "nook", "side"}},
      {"side", {"edge", "flank", "border", "margin"}},
      {"front", {"fore", "face", "facade", "foreground"}},
      {"back", {"rear", "behind", "stern", "tail"}},
      {"edge", {"border", "rim", "margin", "brink"}},
      {"near", {"close", "beside", "by", "nearby", "alongside"}},
      {"next", {"beside", "adjacent", "alongside", "near"}},
      {"inside", {"within", "indoors", "interior"}},
      {"outside", {"outdoors", "exterior", "outdoor", "outer"}},
      {"above", {"over", "atop", "higher", "overhead"}},
      {"below", {"beneath", "under", "underneath", "lower"}},
      // verbs
      {"sitting", {"seated", "perched", "resting", "lounging"}},
      {"standing", {"upright", "posing", "waiting", "staying"}},
      {"walking", {"strolling", "stepping", "wandering", "hiking"}},
      {"running", {"jogging", "sprinting", "racing", "dashing"}},
      {"riding", {"driving", "cycling", "steering", "traveling"}},
      {"playing", {"competing", "frolicking", "gaming", "toying"}},
      {"holding", {"carrying", "gripping", "grasping", "clutching"}},
      {"eating", {"consuming", "munching", "chewing", "devouring"}},
      {"looking", {"gazing", "staring", "watching", "peering"}},
      {"flying", {"soaring", "gliding", "hovering", "floating"}},
      {"parked", {"stationed", "stopped", "stationary", "idle"}},
      {"lying", {"resting", "reclining", "sprawled", "laying"}},
      {"wearing", {"sporting", "dressed", "donning", "clad"}},
      {"shows", {"depicts", "displays", "presents", "features"}},
      {"show", {"depict", "display", "present", "feature"}},
      {"contains", {"includes", "holds", "features", "has"}},
      {"placed", {"positioned", "set", "located", "situated"}},
      {"located", {"situated", "positioned", "placed", "set"}},
      {"floating", {"drifting", "hovering", "suspended", "bobbing"}},
      {"resting", {"lying", "sitting", "lounging", "reposing"}},
      {"growing", {"sprouting", "flourishing", "thriving", "blooming"}},
      {"waiting", {"standing", "lingering", "pausing", "idling"}},
      {"smiling", {"grinning", "beaming", "laughing", "happy"}},
      {"covered", {"coated", "blanketed", "draped", "topped"}},
      {"filled", {"packed", "loaded", "stuffed", "crammed"}},
      {"made", {"built", "crafted", "formed", "created"}},
      {"view", {"sight", "scene", "vista", "outlook", "glimpse"}},
      {"close", {"near", "nearby", "tight", "adjacent"}},
      {"far", {"distant", "remote", "away", "faraway"}},
      {"alone", {"solo", "single", "solitary", "isolated"}},
      {"together", {"jointly", "collectively", "side-by-side"}},
      {"day", {"daytime", "afternoon", "morning", "noon"}},
      {"night", {"evening", "nighttime", "dusk", "darkness"}},
      {"sunny", {"bright", "clear", "cloudless", "fine"}},
      {"cloudy", {"overcast", "grey", "gloomy", "dull"}},
      {"snowy", {"wintry", "frosty", "icy", "white"}},
  };
  return lexicon;
}

}  // namespace badcm
