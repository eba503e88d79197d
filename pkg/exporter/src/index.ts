export {
  ArrayBundle,
  BundleSet,
  ExporterError,
  loadBundleSet,
  validateBundle,
} from "./bundle.js";
export { decodeLtd, encodeLtd, exportLtd, manifestPath } from "./ltd.js";
