/* tslint:disable */
/* eslint-disable */

export class DemoModel {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Activity names in label order, one per line.
     */
    activity_names(): string;
    epoch(): number;
    /**
     * Row-major `[channels, vocab]` output of layer `layer` for `tags`.
     */
    feature_map(tags: string, layer: number): Float64Array;
    k(): number;
    /**
     * Channels of layer `layer`'s output map.
     */
    layer_channels(layer: number): number;
    layers(): number;
    losses(): Float64Array;
    constructor(seed: number, k: number);
    /**
     * Resident probabilities followed by activity probabilities.
     */
    predict(tags: string): Float64Array;
    /**
     * Sensor tags in vocabulary order, space separated.
     */
    tags(): string;
    /**
     * `[resident accuracy, activity accuracy]` on the held-out files.
     */
    test_accuracy(): Float64Array;
    /**
     * `"tags|resident activity"` for held-out sample `i`, labels 1-based.
     */
    test_sample(i: number): string | undefined;
    test_windows(): number;
    /**
     * Runs `n` Adam steps; returns the last batch loss.
     */
    train(n: number): number;
    train_windows(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demomodel_free: (a: number, b: number) => void;
    readonly demomodel_activity_names: (a: number) => [number, number];
    readonly demomodel_epoch: (a: number) => number;
    readonly demomodel_feature_map: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demomodel_k: (a: number) => number;
    readonly demomodel_layer_channels: (a: number, b: number) => number;
    readonly demomodel_layers: (a: number) => number;
    readonly demomodel_losses: (a: number) => [number, number];
    readonly demomodel_new: (a: number, b: number) => [number, number, number];
    readonly demomodel_predict: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demomodel_tags: (a: number) => [number, number];
    readonly demomodel_test_accuracy: (a: number) => [number, number, number, number];
    readonly demomodel_test_sample: (a: number, b: number) => [number, number];
    readonly demomodel_test_windows: (a: number) => number;
    readonly demomodel_train: (a: number, b: number) => [number, number, number];
    readonly demomodel_train_windows: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
