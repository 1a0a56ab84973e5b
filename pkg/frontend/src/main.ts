import { App } from "./app.js";

const app = new App(document);
(globalThis as Record<string, unknown>).promptsegApp = app; // console access
