/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic dataset and a model trained on it one epoch at a time.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    albums(): number;
    epochs(): number;
    /**
     * Selected summary, selector attention and a beam-search story for one
     * album, as JSON.
     */
    inspect(album: number, beam: number): string;
    constructor(albums: number, seed: number);
    /**
     * Runs `epochs` more epochs; returns the last epoch's mean loss.
     */
    train(epochs: number): number;
}

/**
 * Corpus BLEU-n of one hypothesis against one reference.
 */
export function bleu(hypothesis: string, reference: string, n: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly bleu: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_albums: (a: number) => number;
    readonly demo_epochs: (a: number) => number;
    readonly demo_inspect: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
