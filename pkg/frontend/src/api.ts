import type { ChatResponse, QueryResult, ServiceError, SessionMemory } from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the HTTP status so callers can branch on 409. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ServiceError,
  ) {
    super(body.error || `HTTP ${status}`);
  }

  get retryable(): boolean {
    return this.status === 409 || Boolean(this.body.retry);
  }
}

/** Thin typed client over the /v1 endpoints. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, payload?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { 'content-type': 'application/json' },
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body as ServiceError);
    }
    return body as T;
  }

  chat(payload: {
    user_id: string;
    message: string;
    session_id?: string;
    pattern?: string;
  }): Promise<ChatResponse> {
    return this.request<ChatResponse>('POST', '/v1/chat', payload);
  }

  query(statement: string): Promise<QueryResult> {
    return this.request<QueryResult>('POST', '/v1/query', { statement });
  }

  sessionMemory(sessionId: string): Promise<SessionMemory> {
    return this.request<SessionMemory>('GET', `/v1/sessions/${sessionId}/memory`);
  }
}

/** Queries used to resolve provenance ids into drawable triples. */
export const EDGE_QUERY = 'MATCH (a)-[r]->(b) RETURN r, a, b, a.name, b.name';
export const NODE_QUERY = 'MATCH (n) RETURN n, n.name';
