/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demomodel_free: (a: number, b: number) => void;
export const demomodel_activity_names: (a: number) => [number, number];
export const demomodel_epoch: (a: number) => number;
export const demomodel_feature_map: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demomodel_k: (a: number) => number;
export const demomodel_layer_channels: (a: number, b: number) => number;
export const demomodel_layers: (a: number) => number;
export const demomodel_losses: (a: number) => [number, number];
export const demomodel_new: (a: number, b: number) => [number, number, number];
export const demomodel_predict: (a: number, b: number, c: number) => [number, number, number, number];
export const demomodel_tags: (a: number) => [number, number];
export const demomodel_test_accuracy: (a: number) => [number, number, number, number];
export const demomodel_test_sample: (a: number, b: number) => [number, number];
export const demomodel_test_windows: (a: number) => number;
export const demomodel_train: (a: number, b: number) => [number, number, number];
export const demomodel_train_windows: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
